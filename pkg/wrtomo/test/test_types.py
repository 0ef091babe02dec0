import numpy as np
import pytest

from wrtomo.core import (
    BraggMapStack,
    CrystalSignature,
    HyperSinogram,
    HyperVolume,
    LabelVolume,
    SinogramKind,
    ViewGeometry,
    WavelengthGrid,
    counts_to_projection,
    projection_to_counts,
)


@pytest.mark.parametrize(
    "counts, expected",
    [(500.0, 0.0), (500.0 / np.e, 1.0), (0.0, np.log(1000))],
)
def test_counts_to_projection(counts, expected):
    sino = HyperSinogram(np.full((1, 1, 1, 1), counts), "counts", 500)
    g = counts_to_projection(sino, floor=0.5)
    assert g.kind is SinogramKind.PROJECTION
    assert np.isclose(g.data.item(), expected, rtol=1e-12, atol=1e-14)


def test_projection_counts_inverse(rng):
    counts = rng.uniform(1, 500, size=(2, 3, 2, 4))
    sino = HyperSinogram(counts, SinogramKind.COUNTS, 500)
    back = projection_to_counts(counts_to_projection(sino))
    assert np.allclose(back.data, counts, rtol=1e-12)

    with pytest.raises(ValueError):
        projection_to_counts(sino)
    with pytest.raises(ValueError):
        counts_to_projection(sino, incident_flux=-1)


def test_hyper_sinogram_validation():
    with pytest.raises(ValueError):
        HyperSinogram(np.ones((2, 2, 2)), "counts", 1)
    with pytest.raises(ValueError):
        HyperSinogram(-np.ones((1, 2, 2, 2)), "counts", 1)
    with pytest.raises(ValueError):
        HyperSinogram(np.ones((1, 2, 2, 2)), "counts", 0)
    with pytest.raises(ValueError):
        HyperSinogram(np.full((1, 2, 2, 2), np.nan), "projection", 1)

    sino = HyperSinogram(np.ones((1, 2, 2, 2), dtype=np.float32), "counts", 10)
    assert sino.data.dtype == np.float32
    assert not sino.data.flags.writeable
    assert sino.n_measurements == 8


def test_check_consistent():
    grid = WavelengthGrid.linspace(2, 3, 3)
    geometry = ViewGeometry.uniform(4, nx=5, nz=2)
    sino = HyperSinogram(np.ones((3, 4, 2, 5)), "counts", 10)
    sino.check_consistent(grid, geometry)
    with pytest.raises(ValueError):
        sino.check_consistent(WavelengthGrid.linspace(2, 3, 4), geometry)


def test_wavelength_grid():
    grid = WavelengthGrid.linspace(2.25, 4.0, 8)
    assert grid.count == len(grid) == 8
    assert grid.index_of(4.1) == 7
    assert grid.index_of(2.0) == 0
    assert WavelengthGrid.from_dict(grid.to_dict()) == grid
    with pytest.raises(ValueError):
        WavelengthGrid([3.0, 2.0])
    with pytest.raises(ValueError):
        WavelengthGrid([0.0, 1.0])
    with pytest.raises(ValueError):
        WavelengthGrid([])


def test_view_geometry():
    g = ViewGeometry.uniform(90, nx=64, nz=8)
    assert g.n_views == 90
    assert g.volume_shape == (8, 64, 64)
    assert g.sinogram_shape == (90, 8, 64)
    assert g.pixel_pitch == g.voxel_pitch == 50
    assert np.isclose(g.angles[1], 2.0)
    assert g.view_index(359.5) == 0
    assert g.view_index(40.6) == 20
    assert ViewGeometry.from_dict(g.to_dict()) == g

    with pytest.raises(ValueError):
        ViewGeometry.uniform(4, nx=8, angle_start=-10)
    with pytest.raises(ValueError):
        ViewGeometry.uniform(4, nx=0)
    with pytest.raises(ValueError):
        ViewGeometry.uniform(4, nx=8, voxel_pitch=-1)


def test_hyper_volume():
    with pytest.raises(ValueError):
        HyperVolume(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        HyperVolume(np.full((1, 1, 1, 1), np.inf))
    assert HyperVolume(np.zeros((3, 1, 2, 2))).shape == (3, 1, 2, 2)


def test_bragg_map_stack():
    data = np.zeros((2, 3, 1, 4), dtype=bool)
    data[1, 0] = True
    stack = BraggMapStack(data)
    assert stack.data.dtype == np.uint8
    assert np.allclose(stack.flagged_fraction(), [0, 1 / 3])
    with pytest.raises(ValueError):
        BraggMapStack(2 * data)


def test_label_volume():
    labels = np.zeros((1, 4, 6), dtype=int)
    labels[0, :2, :2] = 1
    labels[0, 2:, 4:] = 2
    volume = LabelVolume(labels)
    assert volume.n_labels == 2
    assert volume.sizes().tolist() == [4, 4]
    assert volume.is_connected()

    split = labels.copy()
    split[0, 0, 5] = 1
    assert not LabelVolume(split).is_connected()

    diagonal = np.zeros((1, 2, 2), dtype=int)
    diagonal[0, 0, 0] = diagonal[0, 1, 1] = 1
    assert LabelVolume(diagonal).is_connected(connectivity=3)
    assert not LabelVolume(diagonal).is_connected(connectivity=1)

    with pytest.raises(ValueError):
        LabelVolume(np.full((1, 2, 2), 2))
    with pytest.raises(ValueError):
        LabelVolume(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        LabelVolume(np.full((1, 2, 2), 0.5))


def test_crystal_signature():
    sig = CrystalSignature(1, np.eye(3), scores=np.full((3, 3), np.nan))
    sig.check_shape(3, 3)
    with pytest.raises(ValueError):
        sig.check_shape(3, 4)
    with pytest.raises(ValueError):
        CrystalSignature(1, 0.5 * np.eye(3))
    with pytest.raises(ValueError):
        CrystalSignature(1, np.eye(3), scores=np.zeros((2, 3)))
