"""The ``.wrt`` container: a directory holding ``manifest.json`` plus one raw,
little-endian, C-ordered file per array, without headers or compression.
"""

import json
import logging
import os
import shutil
import tempfile
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from .types import ViewGeometry, WavelengthGrid

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
CONTAINER_SUFFIX = ".wrt"

#: Element kinds and their on-disk numpy dtypes.
DTYPES = {
    "f32": np.dtype("<f4"),
    "u8": np.dtype("u1"),
    "i32": np.dtype("<i4"),
}


class ContainerFormatError(ValueError):
    pass


class ArraySpec(NamedTuple):
    """Manifest entry describing one stored array.

    name: The array name, also the stem of its raw file.
    shape: The array shape.
    dtype: One of ``"f32"``, ``"u8"``, ``"i32"``.
    axes: Axis labels, slowest to fastest.
    units: Units of the values.
    """

    name: str
    shape: Tuple[int, ...]
    dtype: str
    axes: Tuple[str, ...] = ()
    units: str = ""

    @property
    def filename(self) -> str:
        return f"{self.name}.{self.dtype}"

    @property
    def nbytes(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) * DTYPES[self.dtype].itemsize

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "shape": list(self.shape),
            "dtype": self.dtype,
            "axes": list(self.axes),
            "units": self.units,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ArraySpec":
        try:
            return cls(
                name=str(d["name"]),
                shape=tuple(int(n) for n in d["shape"]),
                dtype=str(d["dtype"]),
                axes=tuple(d.get("axes", ())),
                units=str(d.get("units", "")),
            )
        except (KeyError, TypeError) as e:
            raise ContainerFormatError(f"Malformed array entry {dict(d)!r}.") from e


@dataclass
class Manifest:
    """Metadata stored in ``manifest.json``.

    Args:
        arrays: One entry per stored array.
        wavelength_grid: The wavelength grid, if any.
        geometry: The acquisition geometry, if any.
        incident_flux: Open-beam counts per pixel, if any.
        seed: The RNG seed used to produce the data, if any.
        config: The run configuration that produced the data.
        version: Version of the producing tool.
        attrs: Free-form metadata, for example the producing stage.
        schema_version: Container schema version.
    """

    arrays: List[ArraySpec] = field(default_factory=list)
    wavelength_grid: Optional[WavelengthGrid] = None
    geometry: Optional[ViewGeometry] = None
    incident_flux: Optional[float] = None
    seed: Optional[int] = None
    config: Optional[Dict[str, Any]] = None
    version: Optional[str] = None
    attrs: Dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def array(self, name: str) -> ArraySpec:
        for spec in self.arrays:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "version": self.version,
            "arrays": [spec.to_dict() for spec in self.arrays],
            "wavelength_grid": (
                None if self.wavelength_grid is None else self.wavelength_grid.to_dict()
            ),
            "geometry": None if self.geometry is None else self.geometry.to_dict(),
            "incident_flux": self.incident_flux,
            "seed": self.seed,
            "config": self.config,
            "attrs": self.attrs,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Manifest":
        schema_version = d.get("schema_version")
        if schema_version != SCHEMA_VERSION:
            raise ContainerFormatError(
                f"Unsupported container schema version {schema_version!r}"
                f" (expected {SCHEMA_VERSION})."
            )
        grid = d.get("wavelength_grid")
        geometry = d.get("geometry")
        try:
            return cls(
                arrays=[ArraySpec.from_dict(a) for a in d.get("arrays", [])],
                wavelength_grid=None if grid is None else WavelengthGrid.from_dict(grid),
                geometry=None if geometry is None else ViewGeometry.from_dict(geometry),
                incident_flux=d.get("incident_flux"),
                seed=d.get("seed"),
                config=d.get("config"),
                version=d.get("version"),
                attrs=dict(d.get("attrs") or {}),
                schema_version=schema_version,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ContainerFormatError):
                raise
            raise ContainerFormatError(f"Invalid manifest: {e}") from e

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Manifest):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _check_arrays(
    manifest: Manifest, arrays: Mapping[str, np.ndarray]
) -> Dict[str, np.ndarray]:
    names = [spec.name for spec in manifest.arrays]
    if len(set(names)) != len(names):
        raise ContainerFormatError(f"Duplicate array names in manifest: {names}.")
    if missing := set(arrays).difference(names):
        raise ContainerFormatError(
            f"Arrays {sorted(missing)} are not described by the manifest."
        )
    checked = {}
    for spec in manifest.arrays:
        if spec.dtype not in DTYPES:
            raise ContainerFormatError(
                f"Unsupported element kind {spec.dtype!r} for array {spec.name!r}"
                f" (expected one of {list(DTYPES)})."
            )
        if spec.name not in arrays:
            raise ContainerFormatError(f"No data given for array {spec.name!r}.")
        array = np.asarray(arrays[spec.name])
        if array.shape != spec.shape:
            raise ContainerFormatError(
                f"Array {spec.name!r} has shape {array.shape}, but the manifest"
                f" declares {spec.shape}."
            )
        if spec.axes and len(spec.axes) != len(spec.shape):
            raise ContainerFormatError(
                f"Array {spec.name!r} has {len(spec.shape)} dimensions but"
                f" {len(spec.axes)} axis labels."
            )
        _check_range(spec, array)
        checked[spec.name] = np.ascontiguousarray(array, dtype=DTYPES[spec.dtype])
    return checked


def _check_range(spec: ArraySpec, array: np.ndarray) -> None:
    """Raises if ``array`` does not fit the integer element kind of ``spec``."""
    target = DTYPES[spec.dtype]
    if target.kind == "f" or array.size == 0 or array.dtype == np.bool_:
        return
    if array.dtype.kind not in "iuf":
        raise ContainerFormatError(
            f"Array {spec.name!r} of dtype {array.dtype} cannot be stored as"
            f" {spec.dtype}."
        )
    if array.dtype.kind == "f":
        if not np.all(np.isfinite(array)):
            raise ContainerFormatError(
                f"Array {spec.name!r} has non-finite values and cannot be stored"
                f" as {spec.dtype}."
            )
        if np.any(array != np.round(array)):
            raise ContainerFormatError(
                f"Array {spec.name!r} has non-integral values and cannot be"
                f" stored as {spec.dtype}."
            )
    info = np.iinfo(target)
    lo, hi = array.min(), array.max()
    if lo < info.min or hi > info.max:
        raise ContainerFormatError(
            f"Array {spec.name!r} has values in [{lo}, {hi}], outside the"
            f" {spec.dtype} range [{info.min}, {info.max}]."
        )


def _write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def _replace_dir(src: Path, dst: Path) -> None:
    if dst.exists():
        backup = Path(tempfile.mkdtemp(prefix=f".{dst.name}.old-", dir=dst.parent))
        os.replace(dst, backup / dst.name)
        os.replace(src, dst)
        shutil.rmtree(backup, ignore_errors=True)
    else:
        os.replace(src, dst)


class ContainerWriter:
    """A context manager that stages a container in a temporary directory next
    to ``path`` and renames it into place on a clean exit.

    Args:
        path: The destination ``.wrt`` directory.
        logger: Logger used to report discarded output.
    """

    def __init__(
        self, path: Union[str, Path], logger: Optional[logging.Logger] = None
    ):
        self.path = Path(path)
        self.logger = logger if logger is not None else logging.getLogger(__name__)
        self.tmp_path: Optional[Path] = None

    def __enter__(self) -> "ContainerWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.tmp_path = Path(
            tempfile.mkdtemp(prefix=f".{self.path.name}.tmp-", dir=self.path.parent)
        )
        return self

    def write_arrays(
        self, manifest: Manifest, arrays: Mapping[str, np.ndarray]
    ) -> None:
        checked = _check_arrays(manifest, arrays)
        for spec in manifest.arrays:
            checked[spec.name].tofile(self.tmp_path / spec.filename)
        _write_json(self.tmp_path / MANIFEST_NAME, manifest.to_dict())

    def write_json(self, name: str, obj: Any) -> None:
        """Writes a JSON sidecar file into the container."""
        if name == MANIFEST_NAME:
            raise ValueError(f"{MANIFEST_NAME!r} is reserved.")
        _write_json(self.tmp_path / name, obj)

    def __exit__(self, exc_type, exc_value, exc_traceback) -> None:
        if exc_value is not None:
            self.logger.warning(f"Discarding partial output for {self.path}:")
            self.logger.warning(
                "".join(traceback.format_exception(exc_type, exc_value, exc_traceback))
            )
            shutil.rmtree(self.tmp_path, ignore_errors=True)
            return
        if not (self.tmp_path / MANIFEST_NAME).exists():
            shutil.rmtree(self.tmp_path, ignore_errors=True)
            raise ContainerFormatError(f"No manifest was written for {self.path}.")
        _replace_dir(self.tmp_path, self.path)
        self.logger.debug(f"Wrote container {self.path}.")


def save_container(
    path: Union[str, Path],
    manifest: Manifest,
    arrays: Mapping[str, np.ndarray],
    sidecars: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Atomically writes a ``.wrt`` container.

    Arrays are cast to the element kind declared in the manifest. Values that
    an integer kind cannot represent exactly are rejected before anything is
    written.

    Args:
        path: Destination directory. The ``.wrt`` suffix is added if missing.
        manifest: Describes every array in ``arrays``.
        arrays: Mapping from array name to data.
        sidecars: Optional JSON documents to store next to the manifest,
            keyed by file name.

    Returns:
        The path of the written container.
    """
    path = Path(path)
    if path.suffix != CONTAINER_SUFFIX:
        path = path.with_name(path.name + CONTAINER_SUFFIX)
    _check_arrays(manifest, arrays)
    with ContainerWriter(path) as writer:
        writer.write_arrays(manifest, arrays)
        for name, obj in (sidecars or {}).items():
            writer.write_json(name, obj)
    return path


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"No {MANIFEST_NAME} found in {path}.")
    try:
        with open(manifest_path, encoding="utf-8") as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise ContainerFormatError(f"Malformed {manifest_path}: {e}") from e
    return Manifest.from_dict(d)


def load_container(path: Union[str, Path]) -> Tuple[Manifest, Dict[str, np.ndarray]]:
    """Reads a ``.wrt`` container.

    Args:
        path: The container directory.

    Returns:
        The manifest and a dict of arrays in their stored element kinds.
    """
    path = Path(path)
    manifest = load_manifest(path)
    arrays = {}
    for spec in manifest.arrays:
        if spec.dtype not in DTYPES:
            raise ContainerFormatError(
                f"Unsupported element kind {spec.dtype!r} for array {spec.name!r}."
            )
        file = path / spec.filename
        if not file.is_file():
            raise ContainerFormatError(f"Missing array file {file}.")
        size = file.stat().st_size
        if size != spec.nbytes:
            raise ContainerFormatError(
                f"Array file {file} holds {size} bytes, but the manifest declares"
                f" shape {spec.shape} of {spec.dtype} ({spec.nbytes} bytes)."
            )
        arrays[spec.name] = np.fromfile(file, dtype=DTYPES[spec.dtype]).reshape(
            spec.shape
        )
    return manifest, arrays


def load_sidecar(path: Union[str, Path], name: str) -> Any:
    """Reads a JSON sidecar written with ``save_container(..., sidecars=...)``."""
    file = Path(path) / name
    if not file.is_file():
        raise FileNotFoundError(f"No sidecar {name!r} in {path}.")
    with open(file, encoding="utf-8") as f:
        return json.load(f)


def array_spec(
    name: str, array: np.ndarray, dtype: str, axes: Tuple[str, ...], units: str = ""
) -> ArraySpec:
    """Convenience constructor for an :class:`ArraySpec` matching ``array``."""
    return ArraySpec(name, tuple(np.shape(array)), dtype, tuple(axes), units)
