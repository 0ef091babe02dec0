import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

ScalarOrSequence = Union[float, Sequence[float], None]


class RmbirParamsError(ValueError):
    pass


class InitKind(Enum):
    """Starting point of the solver."""

    FBP: str = "fbp"
    ZERO: str = "zero"


@dataclass
class RmbirParams:
    """Options for the robust model-based reconstruction.

    Either ``threshold`` or ``outlier_fraction`` selects the Talwar threshold
    :math:`T_k` of each wavelength channel. An explicit ``threshold`` takes
    precedence. With ``outlier_fraction`` :math:`\\rho_k`, :math:`T_k` is the
    :math:`(1 - \\rho_k)` quantile of the normalized residuals of a
    preliminary reconstruction without outlier rejection, but never less
    than ``min_threshold``. ``threshold = inf`` disables outlier rejection.

    Args:
        threshold: :math:`T_k` in normalized-residual units, a scalar or one
            value per wavelength.
        outlier_fraction: :math:`\\rho_k \\in (0, 1)`, a scalar or one value
            per wavelength.
        min_threshold: Lower bound on a quantile-selected threshold.
        sigma: Regularizer scale :math:`\\sigma_{f,k}` in 1/um, a scalar or
            one value per wavelength.
        p: q-GGMRF exponent near zero.
        q: q-GGMRF exponent for large differences.
        c: q-GGMRF transition, as a fraction of ``sigma``.
        max_outer: Maximum number of majorization steps.
        max_inner: Maximum number of gradient iterations per majorization step.
        tol: Stop when the relative cost decrease of an outer step is below this.
        nonneg: Constrain the attenuation to be non-negative.
        init: ``"fbp"`` (clipped at zero) or ``"zero"``.
        weight_floor: Lower bound on the counts used as statistical weights.
        power_iterations: Iterations of the Lipschitz estimate.
        lipschitz_margin: Multiplier applied to the Lipschitz estimate.
    """

    threshold: ScalarOrSequence = None
    outlier_fraction: ScalarOrSequence = 0.1
    min_threshold: float = 0.0
    sigma: ScalarOrSequence = 2e-5
    p: float = 2.0
    q: float = 1.2
    c: float = 0.01
    max_outer: int = 20
    max_inner: int = 30
    tol: float = 1e-4
    nonneg: bool = True
    init: Union[InitKind, str] = InitKind.FBP
    weight_floor: float = 0.5
    power_iterations: int = 10
    lipschitz_margin: float = 1.1

    def validate(self, n_channels: Optional[int] = None) -> None:
        """Checks the options, and per-channel lengths if ``n_channels`` is given."""
        if self.threshold is None and self.outlier_fraction is None:
            raise RmbirParamsError(
                "One of threshold or outlier_fraction must be specified."
            )
        if self.threshold is not None:
            values = np.atleast_1d(np.asarray(self.threshold, dtype=float))
            if np.any(np.isnan(values)) or np.any(values <= 0):
                raise RmbirParamsError(
                    f"threshold must be > 0 (got {self.threshold})."
                )
            self._check_length("threshold", values, n_channels)
        else:
            values = np.atleast_1d(np.asarray(self.outlier_fraction, dtype=float))
            if not np.all((values > 0) & (values < 1)):
                raise RmbirParamsError(
                    f"outlier_fraction must be in (0, 1) (got {self.outlier_fraction})."
                )
            self._check_length("outlier_fraction", values, n_channels)
        if not (self.min_threshold >= 0 and math.isfinite(self.min_threshold)):
            raise RmbirParamsError(
                f"min_threshold must be finite and >= 0 (got {self.min_threshold})."
            )
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if not np.all(np.isfinite(sigma) & (sigma > 0)):
            raise RmbirParamsError(f"sigma must be finite and > 0 (got {self.sigma}).")
        self._check_length("sigma", sigma, n_channels)
        if not 1 <= self.q < self.p <= 2:
            raise RmbirParamsError(
                f"The q-GGMRF shape must satisfy 1 <= q < p <= 2"
                f" (got p={self.p}, q={self.q})."
            )
        if not self.c > 0:
            raise RmbirParamsError(f"c must be > 0 (got {self.c}).")
        for name in ("max_outer", "max_inner", "power_iterations"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise RmbirParamsError(f"{name} must be an integer >= 1 (got {value}).")
        if not self.tol >= 0:
            raise RmbirParamsError(f"tol must be >= 0 (got {self.tol}).")
        if not self.weight_floor > 0:
            raise RmbirParamsError(
                f"weight_floor must be > 0 (got {self.weight_floor})."
            )
        if not self.lipschitz_margin >= 1:
            raise RmbirParamsError(
                f"lipschitz_margin must be >= 1 (got {self.lipschitz_margin})."
            )
        init = self.init
        if isinstance(init, str):
            try:
                init = InitKind(init.lower())
            except ValueError:
                valid = [k.value for k in InitKind]
                raise RmbirParamsError(f"init must be one of {valid!r}, got {init!r}.")
            self.init = init

    @staticmethod
    def _check_length(name: str, values: np.ndarray, n_channels: Optional[int]):
        if n_channels is not None and values.size not in (1, n_channels):
            raise RmbirParamsError(
                f"{name} must be a scalar or have one value per wavelength"
                f" ({n_channels}), got {values.size} values."
            )

    @staticmethod
    def _select(value: ScalarOrSequence, channel: int) -> Optional[float]:
        if value is None:
            return None
        values = np.atleast_1d(np.asarray(value, dtype=float))
        return float(values[0] if values.size == 1 else values[channel])

    def threshold_for(self, channel: int) -> Optional[float]:
        """The explicit threshold of ``channel``, or None for quantile selection."""
        return self._select(self.threshold, channel)

    def outlier_fraction_for(self, channel: int) -> Optional[float]:
        return self._select(self.outlier_fraction, channel)

    def sigma_for(self, channel: int) -> float:
        return self._select(self.sigma, channel)
