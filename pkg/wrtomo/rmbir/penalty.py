"""Data-fit and regularization penalties of the robust reconstruction.

The data term uses the Talwar function, which is quadratic below a
threshold :math:`T` and constant above it. The regularizer is a q-GGMRF
penalty on differences between 26-connected voxel neighbors.
"""

from dataclasses import dataclass
from itertools import product
from typing import List, Tuple, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


def talwar(x: ArrayLike, T: float) -> ArrayLike:
    """The Talwar penalty :math:`\\beta_T(x) = \\min(x^2, T^2)`.

    Args:
        x: Normalized residual(s).
        T: Threshold, > 0. ``np.inf`` gives the plain quadratic.
    """
    if not T > 0:
        raise ValueError(f"The Talwar threshold must be > 0 (got {T}).")
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < T, x**2, T**2)
    if out.ndim == 0:
        return float(out)
    return out


def surrogate_weight(x0: ArrayLike, T: float) -> np.ndarray:
    """Curvature of the quadratic majorizer of :func:`talwar` touching it at ``x0``.

    The majorizer is ``surrogate_weight(x0, T) * x**2 + surrogate_constant(x0, T)``:
    the quadratic itself below the threshold, and the constant :math:`T^2`
    above it.
    """
    return (np.abs(np.asarray(x0, dtype=float)) < T).astype(float)


def surrogate_constant(x0: ArrayLike, T: float) -> np.ndarray:
    """Offset of the quadratic majorizer of :func:`talwar` at ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    return np.where(np.abs(x0) < T, 0.0, T**2 if np.isfinite(T) else 0.0)


def neighborhood() -> List[Tuple[Tuple[int, int, int], float]]:
    """One offset of each symmetric pair in the 26-neighborhood, with weights.

    Weights are proportional to the inverse distance and sum to 1 over all 26
    neighbors, so the 13 returned weights sum to 1/2.
    """
    offsets = [o for o in product((-1, 0, 1), repeat=3) if o > (0, 0, 0)]
    raw = np.array([1 / np.sqrt(np.abs(o).sum()) for o in offsets])
    weights = raw / (2 * raw.sum())
    return list(zip(offsets, weights.tolist()))


NEIGHBORS = neighborhood()


def _pair_slices(shape, offset) -> Tuple[Tuple[slice, ...], Tuple[slice, ...]]:
    first, second = [], []
    for n, o in zip(shape, offset):
        if o >= 0:
            first.append(slice(0, n - o))
            second.append(slice(o, n))
        else:
            first.append(slice(-o, n))
            second.append(slice(0, n + o))
    return tuple(first), tuple(second)


@dataclass(frozen=True)
class QGGMRF:
    """The q-generalized Gaussian Markov random field penalty.

    .. math::

        \\rho(\\Delta) = \\frac{|\\Delta/\\sigma|^p}{1 + |\\Delta/(c\\sigma)|^{p-q}}

    summed over neighboring voxel pairs :math:`(s, r)` with weights
    :math:`b_{sr}` from :func:`neighborhood`.

    Args:
        sigma: Scale :math:`\\sigma` in 1/um.
        p: Exponent for small differences.
        q: Exponent for large differences.
        c: Transition between the two regimes, in units of ``sigma``.
    """

    sigma: float
    p: float = 2.0
    q: float = 1.2
    c: float = 0.01

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0 (got {self.sigma}).")
        if not 1 <= self.q < self.p <= 2:
            raise ValueError(
                f"Expected 1 <= q < p <= 2 (got p={self.p}, q={self.q})."
            )
        if not self.c > 0:
            raise ValueError(f"c must be > 0 (got {self.c}).")

    def potential(self, delta: ArrayLike) -> np.ndarray:
        u = np.abs(np.asarray(delta, dtype=float)) / self.sigma
        return u**self.p / (1 + (u / self.c) ** (self.p - self.q))

    def derivative(self, delta: ArrayLike) -> np.ndarray:
        """:math:`\\rho'(\\Delta)`."""
        delta = np.asarray(delta, dtype=float)
        u = np.abs(delta) / self.sigma
        r = (u / self.c) ** (self.p - self.q)
        du = u ** (self.p - 1) * (self.p + self.q * r) / (1 + r) ** 2
        return np.sign(delta) * du / self.sigma

    def curvature_bound(self) -> float:
        """An upper bound on :math:`\\rho'(\\Delta)/\\Delta`.

        For ``p = 2`` the ratio peaks at :math:`2/\\sigma^2` as
        :math:`\\Delta \\to 0`. For ``p < 2`` it is unbounded there, and it is
        evaluated at :math:`\\Delta = 10^{-3} c \\sigma` instead.
        """
        if self.p == 2:
            return 2 / self.sigma**2
        delta = 1e-3 * self.c * self.sigma
        return float(self.derivative(delta) / delta)

    def lipschitz(self) -> float:
        """Lipschitz constant of :meth:`gradient`."""
        total = 2 * sum(b for _, b in NEIGHBORS)
        return 2 * self.curvature_bound() * total

    def value(self, volume: np.ndarray) -> float:
        """The penalty :math:`R(f)` of a ``(z, y, x)`` volume."""
        total = 0.0
        for offset, b in NEIGHBORS:
            first, second = _pair_slices(volume.shape, offset)
            delta = volume[first] - volume[second]
            if delta.size:
                total += b * float(self.potential(delta).sum())
        return total

    def gradient(self, volume: np.ndarray) -> np.ndarray:
        """The gradient :math:`\\nabla R(f)`, same shape as ``volume``."""
        grad = np.zeros_like(volume, dtype=float)
        for offset, b in NEIGHBORS:
            first, second = _pair_slices(volume.shape, offset)
            delta = volume[first] - volume[second]
            if not delta.size:
                continue
            d = b * self.derivative(delta)
            grad[first] += d
            grad[second] -= d
        return grad
