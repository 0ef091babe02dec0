"""Parametric wavelength- and angle-dependent attenuation of powder and
single-crystal materials.

A powder attenuates according to a smooth baseline spectrum that does not
depend on the rotation angle. A single crystal adds narrow attenuation
ridges, one per reflection, along the loci in the (angle, wavelength) plane
where the Bragg condition :math:`n \\lambda = 2 d \\sin\\theta` holds.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np

from ..core.types import WavelengthGrid, _frozen_array

#: Bumps whose Gaussian exponent exceeds this value are exactly zero.
MAX_EXPONENT = 30.0

#: Knots (Angstrom, 1/um) of the default powder spectrum, with a Bragg edge
#: near 3.6 Angstrom.
DEFAULT_POWDER_KNOTS = (
    (2.25, 6.0e-5),
    (3.60, 8.5e-5),
    (3.62, 6.5e-5),
    (4.00, 7.0e-5),
)

#: Flat baseline of the default single-crystal material, in 1/um.
DEFAULT_CRYSTAL_BASELINE = 1.3e-4


class MaterialKind(Enum):
    POWDER: str = "powder"
    CRYSTAL: str = "crystal"


def bragg_wavelength(d: float, theta: float, n: int = 1) -> float:
    """The wavelength satisfying the Bragg condition, :math:`2 d \\sin\\theta / n`.

    Args:
        d: Lattice plane spacing in Angstrom.
        theta: Bragg angle in degrees, in the open interval (0, 90).
        n: Reflection order.

    Returns:
        The wavelength in Angstrom.
    """
    if not 0 < theta < 90:
        raise ValueError(f"theta must be in (0, 90) degrees (got {theta}).")
    if not d > 0:
        raise ValueError(f"d must be > 0 (got {d}).")
    if int(n) != n or n < 1:
        raise ValueError(f"The reflection order must be an integer >= 1 (got {n}).")
    return 2 * d * math.sin(math.radians(theta)) / n


@dataclass(frozen=True)
class ReflectionTrace:
    """One family of lattice planes of a single crystal.

    Args:
        d: Lattice plane spacing in Angstrom.
        phase: Orientation of the planes relative to the rotation angle, in degrees.
        order: Reflection order :math:`n`.
        amplitude: Peak attenuation added on the Bragg locus, in 1/um.
        angular_width: Gaussian width across rotation angle, in degrees.
        wavelength_width: Gaussian width across wavelength, in Angstrom.
    """

    d: float
    phase: float
    order: int = 1
    amplitude: float = 1e-3
    angular_width: float = 1.5
    wavelength_width: float = 0.02

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"d must be > 0 (got {self.d}).")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1 (got {self.order}).")
        for name in ("amplitude", "angular_width", "wavelength_width"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0 (got {value}).")

    def locus_wavelength(self, angle: Union[float, np.ndarray]) -> np.ndarray:
        """Bragg wavelength at rotation ``angle`` (degrees).

        The Bragg angle is ``angle + phase`` folded into [0, 90] degrees.
        """
        theta = np.radians(np.asarray(angle, dtype=float) + self.phase)
        return 2 * self.d * np.abs(np.sin(theta)) / self.order

    def angular_distance(
        self, wavelength: Union[float, np.ndarray], angle: Union[float, np.ndarray]
    ) -> np.ndarray:
        """Distance in degrees, modulo 180, from ``angle`` to the nearest angle
        at which ``wavelength`` satisfies the Bragg condition.
        """
        s = np.clip(self.order * np.asarray(wavelength, dtype=float) / (2 * self.d), 0, 1)
        alpha = np.degrees(np.arcsin(s))
        angle = np.asarray(angle, dtype=float)
        best = None
        for candidate in (alpha - self.phase, 180.0 - alpha - self.phase):
            delta = np.abs(angle - candidate) % 180.0
            delta = np.minimum(delta, 180.0 - delta)
            best = delta if best is None else np.minimum(best, delta)
        return best

    def contribution(
        self, wavelength: Union[float, np.ndarray], angle: Union[float, np.ndarray]
    ) -> np.ndarray:
        """Attenuation added by this reflection, in 1/um.

        ``wavelength`` and ``angle`` broadcast against each other.
        """
        wavelength = np.asarray(wavelength, dtype=float)
        d_lambda = wavelength - self.locus_wavelength(angle)
        d_phi = self.angular_distance(wavelength, angle)
        exponent = (d_phi / self.angular_width) ** 2 + (
            d_lambda / self.wavelength_width
        ) ** 2
        bump = np.where(
            exponent > MAX_EXPONENT,
            0.0,
            np.exp(-np.minimum(exponent, MAX_EXPONENT)),
        )
        return self.amplitude * bump


def default_traces(amplitude: float = 1e-3) -> Tuple[ReflectionTrace, ...]:
    """Three low-index reflections of a copper-like face-centered cubic lattice."""
    return (
        ReflectionTrace(d=2.087, phase=17.0, amplitude=amplitude),
        ReflectionTrace(d=1.808, phase=63.0, amplitude=amplitude),
        ReflectionTrace(d=1.278, phase=121.0, amplitude=amplitude),
    )


@dataclass(frozen=True, eq=False)
class Material:
    """Attenuation model of one region of the phantom.

    Args:
        kind: Powder or single crystal.
        grid: The wavelengths at which ``baseline`` is tabulated.
        baseline: Angle-independent attenuation at each wavelength, in 1/um.
        traces: Reflections of a crystal. Must be empty for a powder.
    """

    kind: MaterialKind
    grid: WavelengthGrid
    baseline: np.ndarray
    traces: Tuple[ReflectionTrace, ...] = field(default=())

    def __post_init__(self):
        kind = MaterialKind(self.kind)
        baseline = _frozen_array(self.baseline, np.float64)
        if baseline.shape != (self.grid.count,):
            raise ValueError(
                f"The baseline spectrum must have {self.grid.count} values"
                f" (got shape {baseline.shape})."
            )
        if not np.all(baseline > 0):
            raise ValueError("The baseline spectrum must be > 0 everywhere.")
        traces = tuple(self.traces)
        if (kind is MaterialKind.CRYSTAL) != bool(traces):
            raise ValueError(
                "A crystal needs at least one reflection trace and a powder has none"
                f" (got kind={kind.value!r} with {len(traces)} traces)."
            )
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "traces", traces)

    @property
    def is_crystal(self) -> bool:
        return self.kind is MaterialKind.CRYSTAL

    def baseline_at(self, wavelength: Union[float, np.ndarray]) -> np.ndarray:
        """Baseline attenuation linearly interpolated over the grid."""
        wavelength = np.asarray(wavelength, dtype=float)
        lo, hi = self.grid.values[0], self.grid.values[-1]
        tol = 1e-9 * hi
        if np.any(wavelength < lo - tol) or np.any(wavelength > hi + tol):
            raise ValueError(
                f"Wavelength outside the grid range [{lo}, {hi}] Angstrom"
                f" (got min {wavelength.min()}, max {wavelength.max()})."
            )
        return np.interp(wavelength, self.grid.values, self.baseline)

    def trace_table(self, angles: Sequence[float]) -> np.ndarray:
        """Summed trace contributions on the grid, shape ``(K, len(angles))``."""
        angles = np.asarray(angles, dtype=float)
        table = np.zeros((self.grid.count, angles.size))
        lam = self.grid.values[:, np.newaxis]
        for trace in self.traces:
            table += trace.contribution(lam, angles[np.newaxis, :])
        return table


def attenuation(
    material: Material,
    wavelength: Union[float, np.ndarray],
    angle: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    """Linear attenuation coefficient of ``material`` in 1/um.

    Args:
        material: The material.
        wavelength: Wavelength(s) in Angstrom, within the material's grid.
        angle: Rotation angle(s) in degrees.

    Returns:
        The baseline plus the sum of Gaussian Bragg ridges, broadcast over
        ``wavelength`` and ``angle``.
    """
    wavelength = np.asarray(wavelength, dtype=float)
    angle = np.asarray(angle, dtype=float)
    mu = material.baseline_at(wavelength) + np.zeros_like(angle)
    for trace in material.traces:
        mu = mu + trace.contribution(wavelength, angle)
    if mu.ndim == 0:
        return float(mu)
    return mu


def powder_material(
    grid: WavelengthGrid,
    knots: Sequence[Tuple[float, float]] = DEFAULT_POWDER_KNOTS,
) -> Material:
    """A powder with a piecewise linear spectrum through ``knots``.

    Values outside the knots are held constant.
    """
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 2 or knots.shape[1] != 2 or np.any(np.diff(knots[:, 0]) <= 0):
        raise ValueError("knots must be (wavelength, attenuation) pairs in order.")
    baseline = np.interp(grid.values, knots[:, 0], knots[:, 1])
    return Material(MaterialKind.POWDER, grid, baseline)


def crystal_material(
    grid: WavelengthGrid,
    traces: Sequence[ReflectionTrace] = None,
    baseline: Union[float, Sequence[float]] = DEFAULT_CRYSTAL_BASELINE,
) -> Material:
    """A single crystal with a flat or tabulated baseline and ``traces``."""
    if traces is None:
        traces = default_traces()
    baseline = np.broadcast_to(np.asarray(baseline, dtype=float), (grid.count,))
    return Material(MaterialKind.CRYSTAL, grid, baseline, tuple(traces))
