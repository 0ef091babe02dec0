import json

import numpy as np
import pytest

from wrtomo.core import (
    ContainerFormatError,
    ContainerWriter,
    Manifest,
    ViewGeometry,
    WavelengthGrid,
    array_spec,
    load_container,
    load_manifest,
    load_sidecar,
    save_container,
)
from wrtomo.core.container import MANIFEST_NAME


@pytest.fixture
def manifest_and_arrays(rng):
    counts = rng.poisson(100, size=(3, 4, 2, 5)).astype(np.float32)
    labels = rng.integers(0, 3, size=(2, 5, 5)).astype(np.int32)
    arrays = {"counts": counts, "labels": labels}
    manifest = Manifest(
        arrays=[
            array_spec("counts", counts, "f32", ("k", "view", "row", "col"), "counts"),
            array_spec("labels", labels, "i32", ("z", "y", "x")),
        ],
        wavelength_grid=WavelengthGrid.linspace(2.25, 4.0, 3),
        geometry=ViewGeometry.uniform(4, nx=5, nz=2),
        incident_flux=100.0,
        seed=7,
        config={"name": "test", "solver": {"max_outer": 3}},
        version="0.0.0",
        attrs={"stage": "simulate"},
    )
    return manifest, arrays


def test_save_and_load(tmp_path, manifest_and_arrays):
    manifest, arrays = manifest_and_arrays
    path = save_container(tmp_path / "run", manifest, arrays)
    assert path.name == "run.wrt"
    assert (path / MANIFEST_NAME).is_file()
    assert (path / "counts.f32").stat().st_size == arrays["counts"].nbytes

    loaded_manifest, loaded = load_container(path)
    assert loaded_manifest == manifest
    assert loaded_manifest.array("counts").axes == ("k", "view", "row", "col")
    for name, array in arrays.items():
        assert loaded[name].dtype == array.dtype
        assert loaded[name].tobytes() == array.tobytes()


def test_save_casts_to_declared_kind(tmp_path):
    data = np.linspace(0, 1, 6).reshape(2, 3)
    manifest = Manifest(arrays=[array_spec("x", data, "f32", ("a", "b"))])
    path = save_container(tmp_path / "cast.wrt", manifest, {"x": data})
    _, arrays = load_container(path)
    assert arrays["x"].dtype == np.float32
    assert np.allclose(arrays["x"], data, rtol=1e-7)


@pytest.mark.parametrize(
    "dtype, data",
    [
        ("u8", np.array([0, 255, 256])),
        ("u8", np.array([-1, 3])),
        ("i32", np.array([0, 2**31])),
        ("i32", np.array([-(2**31) - 1, 0])),
        ("i32", np.array([1.0, 2.5])),
        ("u8", np.array([1.0, np.nan])),
    ],
)
def test_save_rejects_values_outside_integer_kind(tmp_path, dtype, data):
    manifest = Manifest(arrays=[array_spec("x", data, dtype, ("a",))])
    with pytest.raises(ContainerFormatError):
        save_container(tmp_path / "range.wrt", manifest, {"x": data})
    assert not any(tmp_path.iterdir())


def test_save_accepts_integer_kind_limits(tmp_path):
    labels = np.array([-(2**31), 0, 2**31 - 1], dtype=np.int64)
    mask = np.array([True, False, True])
    counts = np.array([0.0, 17.0, 255.0])
    manifest = Manifest(
        arrays=[
            array_spec("labels", labels, "i32", ("a",)),
            array_spec("mask", mask, "u8", ("a",)),
            array_spec("counts", counts, "u8", ("a",)),
        ]
    )
    path = save_container(tmp_path / "limits.wrt", manifest, {
        "labels": labels, "mask": mask, "counts": counts,
    })
    _, arrays = load_container(path)
    assert arrays["labels"].tolist() == labels.tolist()
    assert arrays["mask"].tolist() == [1, 0, 1]
    assert arrays["counts"].tolist() == [0, 17, 255]


def test_empty_container(tmp_path):
    path = save_container(tmp_path / "empty.wrt", Manifest(), {})
    manifest, arrays = load_container(path)
    assert manifest.arrays == []
    assert arrays == {}


def test_payload_size_mismatch(tmp_path):
    data = np.zeros((2, 2), dtype=np.float32)
    manifest = Manifest(arrays=[array_spec("x", data, "f32", ("a", "b"))])
    path = save_container(tmp_path / "bad.wrt", manifest, {"x": data})
    np.zeros(3, dtype=np.float32).tofile(path / "x.f32")
    with pytest.raises(ContainerFormatError):
        load_container(path)


def test_manifest_array_mismatch(tmp_path):
    data = np.zeros((2, 2))
    wrong_shape = Manifest(arrays=[array_spec("x", np.zeros((3,)), "f32", ("a",))])
    with pytest.raises(ContainerFormatError):
        save_container(tmp_path / "a.wrt", wrong_shape, {"x": data})
    undeclared = Manifest(arrays=[])
    with pytest.raises(ContainerFormatError):
        save_container(tmp_path / "b.wrt", undeclared, {"x": data})
    bad_kind = Manifest(arrays=[array_spec("x", data, "f64", ("a", "b"))])
    with pytest.raises(ContainerFormatError):
        save_container(tmp_path / "c.wrt", bad_kind, {"x": data})
    assert not any(tmp_path.iterdir())


def test_schema_version(tmp_path):
    path = save_container(tmp_path / "v.wrt", Manifest(), {})
    with open(path / MANIFEST_NAME) as f:
        d = json.load(f)
    d["schema_version"] = 99
    with open(path / MANIFEST_NAME, "w") as f:
        json.dump(d, f)
    with pytest.raises(ContainerFormatError):
        load_manifest(path)
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "missing.wrt")


def test_sidecars(tmp_path):
    trace = {"thresholds": [3.0, 3.5]}
    path = save_container(tmp_path / "s.wrt", Manifest(), {}, sidecars={"trace.json": trace})
    assert load_sidecar(path, "trace.json") == trace
    with pytest.raises(FileNotFoundError):
        load_sidecar(path, "other.json")
    with pytest.raises(ValueError):
        save_container(tmp_path / "r.wrt", Manifest(), {}, sidecars={MANIFEST_NAME: {}})


def test_writer_is_atomic(tmp_path, manifest_and_arrays):
    manifest, arrays = manifest_and_arrays
    path = save_container(tmp_path / "run.wrt", manifest, arrays)

    with pytest.raises(RuntimeError):
        with ContainerWriter(path) as writer:
            writer.write_arrays(Manifest(), {})
            raise RuntimeError("interrupted")

    # The previous container is untouched and no staging directories remain.
    loaded_manifest, _ = load_container(path)
    assert loaded_manifest == manifest
    assert [p.name for p in tmp_path.iterdir()] == ["run.wrt"]

    save_container(path, Manifest(), {})
    assert load_manifest(path).arrays == []
    assert [p.name for p in tmp_path.iterdir()] == ["run.wrt"]
