import numpy as np
import pytest

import wrtomo
from wrtomo.signature import (
    AnomalyComponent,
    SignatureParams,
    SignatureParamsError,
    connected_components_2d,
    connected_components_3d,
    correlation_score,
    extract_signatures,
    kmeans_segment,
    match_signatures,
    project_and_binarize,
)


@pytest.fixture(scope="module")
def block_model():
    return wrtomo.SystemModel(wrtomo.ViewGeometry.uniform(4, nx=8, nz=1))


@pytest.fixture(scope="module")
def two_blocks():
    labels = np.zeros((1, 8, 8), dtype=int)
    labels[0, 1:3, 1:3] = 1
    labels[0, 5:7, 5:7] = 2
    return wrtomo.LabelVolume(labels)


def test_kmeans_recovers_two_materials():
    volume = np.zeros((3, 2, 6, 6))
    volume[:, :, 1:4, 2:5] = np.array([1e-4, 2e-4, 3e-4])[:, None, None, None]
    classes = kmeans_segment(volume, 2, seed=3)
    expected = (volume[0] > 0).astype(int)
    assert np.array_equal(classes.labels, expected)


def test_kmeans_hypervolume_input(grid):
    data = np.zeros((grid.count, 1, 4, 4))
    data[:, 0, :2] = 1e-4
    classes = kmeans_segment(wrtomo.HyperVolume(data), 2)
    assert classes.labels[0, :2].all()
    assert not classes.labels[0, 2:].any()


def test_kmeans_invalid():
    with pytest.raises(ValueError):
        kmeans_segment(np.ones((2, 1, 3, 3)), 2)
    with pytest.raises(ValueError):
        kmeans_segment(np.zeros((1, 3, 3)), 2)
    with pytest.raises(ValueError):
        kmeans_segment(np.random.default_rng(0).random((2, 1, 3, 3)), 1)


@pytest.fixture(scope="module")
def two_cubes():
    classes = np.zeros((4, 8, 8), dtype=int)
    classes[0:2, 0:2, 0:2] = 1
    classes[0:3, 4:7, 4:7] = 1
    return classes


def test_components_3d(two_cubes):
    domains, sizes = connected_components_3d(two_cubes, 1, min_voxels=8)
    assert domains.n_labels == 2
    assert sizes.tolist() == [8, 27]
    assert np.array_equal(domains.sizes(), sizes)
    assert domains.mask(1)[0, 0, 0] and domains.mask(2)[0, 4, 4]
    assert domains.is_connected()

    domains, sizes = connected_components_3d(two_cubes, 1, min_voxels=9)
    assert domains.n_labels == 1
    assert sizes.tolist() == [27]


def test_components_3d_none_left(two_cubes):
    domains, sizes = connected_components_3d(two_cubes, 1, min_voxels=28)
    assert domains.n_labels == 0
    assert sizes.size == 0


def test_components_3d_connectivity():
    classes = np.zeros((1, 4, 4), dtype=int)
    classes[0, 0, 0] = classes[0, 1, 1] = 1
    assert connected_components_3d(classes, 1, 1, min_voxels=1)[0].n_labels == 2
    assert connected_components_3d(classes, 1, 2, min_voxels=1)[0].n_labels == 1
    with pytest.raises(ValueError):
        connected_components_3d(classes, 2)
    with pytest.raises(ValueError):
        connected_components_3d(classes[0], 1)


def test_components_2d():
    bragg = np.zeros((2, 3, 6, 8), dtype=np.uint8)
    bragg[0, 0, 0, 0] = 1
    bragg[1, 2, 0:2, 0:2] = 1
    bragg[1, 2, 3:6, 5:7] = 1
    anomalies = connected_components_2d(bragg, [0.0, 60.0, 120.0], min_area=4)
    assert [(a.k, a.view, a.area) for a in anomalies] == [(1, 2, 4), (1, 2, 6)]
    assert all(a.angle == 120.0 for a in anomalies)
    assert anomalies[0].pixels.shape == (6, 8)

    anomalies = connected_components_2d(wrtomo.BraggMapStack(bragg), min_area=1)
    assert len(anomalies) == 3
    assert anomalies[0].angle == 0.0


def test_components_2d_diagonal():
    bragg = np.zeros((1, 1, 4, 4), dtype=np.uint8)
    bragg[0, 0, 0, 0] = bragg[0, 0, 1, 1] = 1
    anomalies = connected_components_2d(bragg, min_area=1)
    assert len(anomalies) == 1
    assert anomalies[0].area == 2


def test_components_2d_empty():
    assert connected_components_2d(np.zeros((2, 3, 4, 4))) == []
    with pytest.raises(ValueError):
        connected_components_2d(np.zeros((1, 3, 4, 4)), angles=[0.0, 1.0])


def test_anomaly_must_be_nonempty():
    with pytest.raises(ValueError):
        AnomalyComponent(view=0, angle=0.0, k=0, pixels=np.zeros((2, 2)))


def test_project_and_binarize():
    model = wrtomo.SystemModel(wrtomo.ViewGeometry.uniform(4, nx=5, nz=1))
    mask = np.zeros(model.volume_shape, dtype=bool)
    assert not project_and_binarize(mask, model, 0).any()

    mask[0, 2, 3] = True
    expected = np.zeros((1, 5), dtype=bool)
    expected[0, 3] = True
    assert np.array_equal(project_and_binarize(mask, model, 0), expected)
    expected = np.zeros((1, 5), dtype=bool)
    expected[0, 2] = True
    assert np.array_equal(project_and_binarize(mask, model, 2), expected)
    assert not project_and_binarize(mask, model, 0, binarize_frac=1.5).any()


def test_correlation_score():
    p = np.array([1, 1, 0, 0], dtype=bool)
    assert correlation_score(p, p) == 1
    assert correlation_score(p, ~p) == 0
    q = np.array([1, 1, 1, 0], dtype=bool)
    r = np.array([1, 0, 0, 0], dtype=bool)
    assert correlation_score(r, q) == pytest.approx(0.5)
    assert correlation_score(q, r) == correlation_score(r, q)
    assert correlation_score(p, np.zeros(4)) == 0


def test_correlation_score_invalid():
    with pytest.raises(ValueError):
        correlation_score(np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        correlation_score(np.ones(4), np.ones(5))


def test_match_exact_footprint(block_model, two_blocks):
    footprint = project_and_binarize(two_blocks.mask(2), block_model, 0)
    assert np.flatnonzero(footprint[0]).tolist() == [5, 6]
    anomaly = AnomalyComponent(view=0, angle=0.0, k=1, pixels=footprint)
    signatures, records = match_signatures(
        two_blocks, [anomaly], block_model, 0.5, n_wavelengths=3
    )
    assert [s.domain_id for s in signatures] == [1, 2]
    assert records[0].domain_id == 2
    assert records[0].score == 1 and records[0].accepted
    assert signatures[1].matrix[0, 1] == 1
    assert signatures[1].matrix.sum() == 1
    assert signatures[0].matrix.sum() == 0
    assert signatures[1].scores[0, 1] == 1
    assert np.isnan(signatures[0].scores).all()
    for s in signatures:
        s.check_shape(4, 3)


def test_match_unmatched_record_kept(block_model, two_blocks):
    pixels = np.zeros((1, 8), dtype=bool)
    pixels[0, 0] = True
    anomaly = AnomalyComponent(view=0, angle=0.0, k=0, pixels=pixels)
    signatures, records = match_signatures(
        two_blocks, [anomaly], block_model, n_wavelengths=1
    )
    assert len(records) == 1
    assert records[0].score == 0
    assert not records[0].accepted
    assert records[0].to_dict()["component"] == 0
    assert all(s.matrix.sum() == 0 for s in signatures)


def test_match_threshold_monotone(block_model, two_blocks):
    pixels = np.zeros((1, 8), dtype=bool)
    pixels[0, 5] = True
    anomalies = [AnomalyComponent(view=v, angle=0.0, k=0, pixels=pixels) for v in (0, 2)]
    counts = []
    for threshold in (0.3, 0.6, 0.9):
        signatures, records = match_signatures(
            two_blocks, anomalies, block_model, threshold, n_wavelengths=1
        )
        counts.append(sum(int(s.matrix.sum()) for s in signatures))
        assert records[0].score == pytest.approx(2 / 3)
    assert counts[0] >= counts[1] >= counts[2]
    assert counts[1] >= 1
    assert counts[2] == 0


def test_match_without_domains(block_model):
    pixels = np.ones((1, 8), dtype=bool)
    anomaly = AnomalyComponent(view=1, angle=45.0, k=0, pixels=pixels)
    domains = wrtomo.LabelVolume(np.zeros(block_model.volume_shape, dtype=int))
    signatures, records = match_signatures(
        domains, [anomaly], block_model, n_wavelengths=2
    )
    assert signatures == []
    assert records[0].domain_id == 0 and not records[0].accepted


def test_match_invalid(block_model, two_blocks):
    pixels = np.ones((1, 8), dtype=bool)
    anomaly = AnomalyComponent(view=0, angle=0.0, k=3, pixels=pixels)
    with pytest.raises(ValueError):
        match_signatures(two_blocks, [anomaly], block_model, n_wavelengths=2)
    with pytest.raises(ValueError):
        match_signatures(two_blocks, [], block_model, 1.0, n_wavelengths=2)


def test_extract_signatures(block_model, two_blocks):
    K = 3
    volumes = np.zeros((K, *block_model.volume_shape))
    volumes[:, two_blocks.labels > 0] = 2e-4
    bragg = np.zeros((K, *block_model.sinogram_shape), dtype=np.uint8)
    bragg[2, 0] = project_and_binarize(two_blocks.mask(2), block_model, 0)
    params = SignatureParams(n_classes=2, min_voxels=4, min_area=1)

    result = extract_signatures(
        wrtomo.HyperVolume(volumes), wrtomo.BraggMapStack(bragg), block_model, params
    )
    assert np.array_equal(result.classes.labels, (two_blocks.labels > 0).astype(int))
    assert np.array_equal(result.domains.labels, two_blocks.labels)
    assert result.sizes.tolist() == [4, 4]
    assert len(result.anomalies) == 1
    assert len(result.records) == 1 and result.records[0].accepted
    assert result.signatures[1].matrix[0, 2] == 1
    assert sum(int(s.matrix.sum()) for s in result.signatures) == 1


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_classes=1),
        dict(n_classes=2.5),
        dict(n_classes=3, foreground_class=3),
        dict(connectivity=4),
        dict(min_voxels=0),
        dict(min_area=0),
        dict(binarize_frac=0),
        dict(score_threshold=1.0),
        dict(score_threshold=0.0),
    ],
)
def test_params_invalid(kwargs):
    with pytest.raises(SignatureParamsError):
        SignatureParams(**kwargs).validate()


def test_params_foreground():
    params = SignatureParams()
    params.validate()
    assert params.foreground == params.n_classes - 1
    assert SignatureParams(foreground_class=0).foreground == 0
