"""Domain types shared by the projector, simulator, solver and signature code.

Array axis conventions, slowest to fastest:

- sinograms: ``(wavelength, view, row, col)``
- volumes: ``(wavelength, z, y, x)``
- single volumes and label volumes: ``(z, y, x)``
- crystal signatures: ``(view, wavelength)``
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

#: Counts below this value are clamped before taking the logarithm.
COUNT_FLOOR = 0.5


def _frozen_array(values: Any, dtype=None) -> np.ndarray:
    if dtype is None:
        # float32 input stays float32, everything else becomes float64
        dtype = np.result_type(np.asarray(values).dtype, np.float32)
        if dtype != np.float32:
            dtype = np.float64
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def array_safe_equals(a: Any, b: Any) -> bool:
    """Check if a and b are equal, even if they are numpy arrays."""
    if a is b:
        return True
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return a.shape == b.shape and np.array_equal(a, b)
    try:
        return a == b
    except TypeError:
        return NotImplemented


@dataclass(frozen=True, eq=False)
class WavelengthGrid:
    """An ordered set of neutron wavelengths.

    Args:
        values: Strictly increasing wavelengths in Angstrom.
    """

    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values, np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError(
                f"A wavelength grid needs at least one value (got shape {values.shape})."
            )
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("Wavelengths must be finite and positive.")
        if np.any(np.diff(values) <= 0):
            raise ValueError("Wavelengths must be strictly increasing.")
        object.__setattr__(self, "values", values)

    @classmethod
    def linspace(cls, start: float, stop: float, count: int) -> "WavelengthGrid":
        """Evenly spaced wavelengths from ``start`` to ``stop``, inclusive."""
        return cls(np.linspace(start, stop, int(count)))

    @property
    def count(self) -> int:
        """The number of wavelength channels, K."""
        return int(self.values.size)

    def __len__(self) -> int:
        return self.count

    def index_of(self, wavelength: float) -> int:
        """Index of the channel nearest to ``wavelength``."""
        return int(np.argmin(np.abs(self.values - wavelength)))

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, WavelengthGrid):
            return NotImplemented
        return array_safe_equals(self.values, other.values)

    def to_dict(self) -> Dict[str, Any]:
        return {"values": self.values.tolist(), "units": "angstrom"}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "WavelengthGrid":
        return cls(d["values"])


@dataclass(frozen=True, eq=False)
class ViewGeometry:
    """Parallel-beam acquisition geometry with a single rotation axis.

    The rotation axis is the volume z axis, and detector rows stack along it.
    At view angle :math:`\\phi` rays travel along :math:`(-\\sin\\phi, \\cos\\phi)`
    and detector columns run along :math:`(\\cos\\phi, \\sin\\phi)`. Pixels and
    voxels are centered on their grids.

    Args:
        angles: Rotation angles in degrees, each in [0, 360).
        detector_rows: Number of detector rows.
        detector_cols: Number of detector columns.
        pixel_pitch: Detector pixel size in microns.
        voxel_pitch: Cubic voxel size in microns.
        nx: Number of voxels along x.
        ny: Number of voxels along y.
        nz: Number of voxels along z.
    """

    angles: np.ndarray
    detector_rows: int
    detector_cols: int
    pixel_pitch: float
    voxel_pitch: float
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        angles = _frozen_array(self.angles, np.float64)
        if angles.ndim != 1 or angles.size < 1:
            raise ValueError("At least one view angle is required.")
        if np.any(angles < 0) or np.any(angles >= 360) or not np.all(
            np.isfinite(angles)
        ):
            raise ValueError(
                "View angles must lie in [0, 360) degrees"
                f" (got min {angles.min()}, max {angles.max()})."
            )
        object.__setattr__(self, "angles", angles)
        for name in ("detector_rows", "detector_cols", "nx", "ny", "nz"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer (got {value}).")
            object.__setattr__(self, name, int(value))
        for name in ("pixel_pitch", "voxel_pitch"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be > 0 (got {value}).")
            object.__setattr__(self, name, value)

    @classmethod
    def uniform(
        cls,
        n_views: int,
        *,
        nx: int,
        ny: Optional[int] = None,
        nz: int = 1,
        voxel_pitch: float = 50.0,
        pixel_pitch: Optional[float] = None,
        detector_rows: Optional[int] = None,
        detector_cols: Optional[int] = None,
        angle_start: float = 0.0,
        angle_stop: float = 180.0,
    ) -> "ViewGeometry":
        """Views evenly spaced over ``[angle_start, angle_stop)``.

        Unspecified detector dimensions and pitch match the volume.
        """
        ny = nx if ny is None else ny
        return cls(
            angles=np.linspace(angle_start, angle_stop, int(n_views), endpoint=False),
            detector_rows=nz if detector_rows is None else detector_rows,
            detector_cols=max(nx, ny) if detector_cols is None else detector_cols,
            pixel_pitch=voxel_pitch if pixel_pitch is None else pixel_pitch,
            voxel_pitch=voxel_pitch,
            nx=nx,
            ny=ny,
            nz=nz,
        )

    @property
    def n_views(self) -> int:
        return int(self.angles.size)

    @property
    def volume_shape(self) -> Tuple[int, int, int]:
        """Volume array shape ``(nz, ny, nx)``."""
        return (self.nz, self.ny, self.nx)

    @property
    def sinogram_shape(self) -> Tuple[int, int, int]:
        """Single-channel sinogram shape ``(views, rows, cols)``."""
        return (self.n_views, self.detector_rows, self.detector_cols)

    def view_index(self, angle: float) -> int:
        """Index of the view nearest to ``angle`` (degrees, modulo 360)."""
        delta = np.abs((self.angles - angle + 180.0) % 360.0 - 180.0)
        return int(np.argmin(delta))

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, ViewGeometry):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "angles": self.angles.tolist(),
            "detector_rows": self.detector_rows,
            "detector_cols": self.detector_cols,
            "pixel_pitch": self.pixel_pitch,
            "voxel_pitch": self.voxel_pitch,
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ViewGeometry":
        return cls(**d)


class SinogramKind(Enum):
    """What a :class:`HyperSinogram` holds."""

    COUNTS: str = "counts"
    PROJECTION: str = "projection"


@dataclass(frozen=True, eq=False)
class HyperSinogram:
    """Wavelength-resolved measurements indexed ``(k, view, row, col)``.

    Args:
        data: The measurement array.
        kind: Raw counts or log-normalized projections.
        incident_flux: Open-beam counts per pixel, :math:`I_0`.
    """

    data: np.ndarray
    kind: SinogramKind
    incident_flux: float

    def __post_init__(self):
        kind = SinogramKind(self.kind)
        data = _frozen_array(self.data)
        if data.ndim != 4:
            raise ValueError(
                f"A hyper-sinogram must be 4D (k, view, row, col), got {data.shape}."
            )
        if kind is SinogramKind.COUNTS and np.any(data < 0):
            raise ValueError("Counts must be non-negative.")
        if kind is SinogramKind.PROJECTION and not np.all(np.isfinite(data)):
            raise ValueError("Projection values must be finite.")
        if not self.incident_flux > 0:
            raise ValueError(f"incident_flux must be > 0 (got {self.incident_flux}).")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "incident_flux", float(self.incident_flux))

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n_measurements(self) -> int:
        """Measurements per channel, M = views * rows * cols."""
        return int(np.prod(self.data.shape[1:]))

    def channel(self, k: int) -> np.ndarray:
        return self.data[k]

    def check_consistent(self, grid: WavelengthGrid, geometry: ViewGeometry) -> None:
        """Raise ``ValueError`` if the shape disagrees with ``grid`` and ``geometry``."""
        expected = (grid.count,) + geometry.sinogram_shape
        if self.shape != expected:
            raise ValueError(
                f"Sinogram shape {self.shape} is inconsistent with the wavelength grid"
                f" and geometry, which require {expected}."
            )


@dataclass(frozen=True, eq=False)
class HyperVolume:
    """Per-wavelength attenuation volumes indexed ``(k, z, y, x)`` in 1/um."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen_array(self.data)
        if data.ndim != 4:
            raise ValueError(
                f"A hyper-volume must be 4D (k, z, y, x), got {data.shape}."
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("Attenuation values must be finite.")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape


def _as_binary(values: Any, what: str) -> np.ndarray:
    array = np.asarray(values)
    if array.dtype != np.bool_ and not np.all((array == 0) | (array == 1)):
        raise ValueError(f"{what} values must be 0 or 1.")
    return _frozen_array(array, np.uint8)


@dataclass(frozen=True, eq=False)
class BraggMapStack:
    """Binary maps of anomalous measurements, indexed ``(k, view, row, col)``."""

    data: np.ndarray

    def __post_init__(self):
        data = _as_binary(self.data, "Bragg map")
        if data.ndim != 4:
            raise ValueError(
                f"A Bragg map stack must be 4D (k, view, row, col), got {data.shape}."
            )
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape

    def flagged_fraction(self) -> np.ndarray:
        """Fraction of flagged measurements per wavelength channel."""
        return self.data.reshape(self.data.shape[0], -1).mean(axis=1)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """An integer volume ``(z, y, x)``, with 0 for background and 1..P for domains.

    Labels must be contiguous from 0. Whether each label is a single connected
    component is checked with :meth:`is_connected`.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise ValueError(f"Labels must be a 3D array, got shape {labels.shape}.")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.array_equal(labels, np.round(labels)):
                raise ValueError("Labels must be integers.")
        labels = _frozen_array(labels, np.int32)
        present = np.unique(labels)
        nonzero = present[present != 0]
        if np.any(present < 0) or not np.array_equal(
            nonzero, np.arange(1, nonzero.size + 1)
        ):
            raise ValueError(
                f"Labels must be contiguous from 0 (found {present.tolist()})."
            )
        object.__setattr__(self, "labels", labels)

    @property
    def n_labels(self) -> int:
        """The number of nonzero labels, P."""
        return int(self.labels.max(initial=0))

    def sizes(self) -> np.ndarray:
        """Voxel counts of labels 1..P."""
        return np.bincount(self.labels.ravel(), minlength=self.n_labels + 1)[1:]

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label

    def is_connected(self, connectivity: int = 3) -> bool:
        """Whether every nonzero label forms exactly one connected component.

        Args:
            connectivity: 1 (faces), 2 (faces and edges), or 3 (full
                26-neighborhood).
        """
        from skimage import measure

        for label in range(1, self.n_labels + 1):
            _, n = measure.label(
                self.mask(label), connectivity=connectivity, return_num=True
            )
            if n != 1:
                return False
        return True


@dataclass(frozen=True, eq=False)
class CrystalSignature:
    """Binary (view x wavelength) map of detected Bragg events for one domain.

    Args:
        domain_id: The domain label.
        matrix: Binary array of shape ``(n_views, K)``.
        scores: Optional matched correlation scores, ``nan`` where unmatched.
    """

    domain_id: int
    matrix: np.ndarray
    scores: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        matrix = _as_binary(self.matrix, "Signature")
        if matrix.ndim != 2:
            raise ValueError(
                f"A signature must be 2D (view, wavelength), got {matrix.shape}."
            )
        object.__setattr__(self, "matrix", matrix)
        if self.scores is not None:
            scores = _frozen_array(self.scores, np.float64)
            if scores.shape != matrix.shape:
                raise ValueError(
                    f"Scores shape {scores.shape} does not match {matrix.shape}."
                )
            object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "domain_id", int(self.domain_id))

    def check_shape(self, n_views: int, n_wavelengths: int) -> None:
        if self.matrix.shape != (n_views, n_wavelengths):
            raise ValueError(
                f"Signature shape {self.matrix.shape} must be"
                f" ({n_views}, {n_wavelengths})."
            )


def counts_to_projection(
    sino: HyperSinogram,
    incident_flux: Optional[float] = None,
    floor: float = COUNT_FLOOR,
) -> HyperSinogram:
    """Converts counts to projections with Beer's law.

    .. math::

        g = -\\ln\\left(\\max(c, c_\\mathrm{floor}) / I_0\\right)

    Args:
        sino: A sinogram of counts.
        incident_flux: :math:`I_0`. Defaults to ``sino.incident_flux``.
        floor: Counts are clamped to at least this value.

    Returns:
        A sinogram of projections.
    """
    if incident_flux is None:
        incident_flux = sino.incident_flux
    if not incident_flux > 0:
        raise ValueError(f"incident_flux must be > 0 (got {incident_flux}).")
    if not floor > 0:
        raise ValueError(f"floor must be > 0 (got {floor}).")
    if sino.kind is not SinogramKind.COUNTS:
        raise ValueError("Expected a sinogram of counts.")
    counts = np.asarray(sino.data, dtype=np.float64)
    data = -np.log(np.maximum(counts, floor) / incident_flux)
    return HyperSinogram(data, SinogramKind.PROJECTION, incident_flux)


def projection_to_counts(
    sino: HyperSinogram, incident_flux: Optional[float] = None
) -> HyperSinogram:
    """Noiseless inverse of :func:`counts_to_projection`: :math:`c = I_0 e^{-g}`."""
    if incident_flux is None:
        incident_flux = sino.incident_flux
    if not incident_flux > 0:
        raise ValueError(f"incident_flux must be > 0 (got {incident_flux}).")
    if sino.kind is not SinogramKind.PROJECTION:
        raise ValueError("Expected a sinogram of projections.")
    counts = incident_flux * np.exp(-np.asarray(sino.data, dtype=np.float64))
    return HyperSinogram(counts, SinogramKind.COUNTS, incident_flux)


def as_channel(
    sino: Union[np.ndarray, HyperSinogram], channel: int = 0
) -> np.ndarray:
    """A single projection channel ``(view, row, col)`` as float64.

    Raises ``ValueError`` if given a sinogram of counts.
    """
    if isinstance(sino, HyperSinogram):
        if sino.kind is not SinogramKind.PROJECTION:
            raise ValueError(
                "Expected projections, got counts. Use counts_to_projection() first."
            )
        return np.asarray(sino.data[channel], dtype=np.float64)
    sino = np.asarray(sino, dtype=np.float64)
    if sino.ndim != 3:
        raise ValueError(
            f"Expected a (view, row, col) sinogram slice, got shape {sino.shape}."
        )
    return sino

