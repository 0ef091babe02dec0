import logging
import math
import time
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple, Union

import joblib
import numpy as np
from tqdm import tqdm

from ..core.types import (
    COUNT_FLOOR,
    BraggMapStack,
    HyperSinogram,
    HyperVolume,
    SinogramKind,
    _frozen_array,
    as_channel,
    counts_to_projection,
)
from ..projector import SystemModel, fbp_reconstruct
from .options import InitKind, RmbirParams
from .penalty import QGGMRF, surrogate_constant, surrogate_weight, talwar

logger = logging.getLogger(__name__)

#: Allowed relative increase of the cost between outer iterations.
DESCENT_TOLERANCE = 1e-9


class RmbirDivergenceError(RuntimeError):
    pass


class ChannelError(RuntimeError):
    """A failure while reconstructing one wavelength channel."""

    def __init__(self, channel: int, message: str):
        super().__init__(f"Channel {channel}: {message}")
        self.channel = channel
        self.message = message

    def __reduce__(self):
        return type(self), (self.channel, self.message)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Diagonal statistical weights, the inverse noise variance of each
    projection, shaped like one sinogram channel.
    """

    data: np.ndarray

    def __post_init__(self):
        data = _frozen_array(self.data, np.float64)
        if not np.all(np.isfinite(data) & (data > 0)):
            raise ValueError("Weights must be finite and > 0.")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.data)


def estimate_weights(counts: np.ndarray, floor: float = COUNT_FLOOR) -> WeightMatrix:
    """Weights :math:`W_{ii} = \\max(c_i, c_\\mathrm{floor})`.

    The variance of :math:`-\\ln(c/I_0)` is approximately :math:`1/c` for
    Poisson counts :math:`c`.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("Counts must be non-negative.")
    if not floor > 0:
        raise ValueError(f"floor must be > 0 (got {floor}).")
    return WeightMatrix(np.maximum(counts, floor))


def _weights(W: Union[WeightMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(W, WeightMatrix):
        return W.data
    return WeightMatrix(W).data


def normalized_residuals(
    f: np.ndarray,
    g: np.ndarray,
    W: Union[WeightMatrix, np.ndarray],
    model: SystemModel,
) -> np.ndarray:
    """:math:`e = (g - Af)\\sqrt{W}`."""
    return (g - model.forward(f)) * np.sqrt(_weights(W))


def cost(
    f: np.ndarray,
    g: np.ndarray,
    W: Union[WeightMatrix, np.ndarray],
    T: float,
    sigma: float,
    model: SystemModel,
    *,
    p: float = 2.0,
    q: float = 1.2,
    c: float = 0.01,
) -> float:
    """The robust cost

    .. math::

        c(f) = \\frac{1}{2}\\sum_i \\beta_T\\left((g_i - [Af]_i)\\sqrt{W_{ii}}\\right)
        + R(f; \\sigma)

    Args:
        f: Volume ``(z, y, x)`` in 1/um.
        g: Projections ``(view, row, col)``.
        W: Statistical weights shaped like ``g``.
        T: Talwar threshold. ``np.inf`` disables saturation.
        sigma: Regularizer scale in 1/um.
        model: The system model.
        p, q, c: q-GGMRF shape parameters.

    Returns:
        The scalar cost.
    """
    g = np.asarray(g, dtype=np.float64)
    weights = _weights(W)
    if g.shape != model.sinogram_shape or weights.shape != g.shape:
        raise ValueError(
            f"Projections {g.shape} and weights {weights.shape} must both have"
            f" the model's sinogram shape {model.sinogram_shape}."
        )
    e = normalized_residuals(f, g, weights, model)
    prior = QGGMRF(sigma, p=p, q=q, c=c)
    return 0.5 * float(np.sum(talwar(e, T))) + prior.value(np.asarray(f, float))


class SurrogateObjective:
    """Quadratic majorizer of the robust cost plus the regularizer.

    .. math::

        Q(f) = \\frac{1}{2}\\sum_i \\tilde{W}_{ii}(g_i - [Af]_i)^2
        + \\frac{1}{2}\\sum_i \\kappa_i + R(f)

    where :math:`\\tilde{W} = W \\tilde{w}` and :math:`\\tilde{w}` and
    :math:`\\kappa` are :func:`surrogate_weight` and :func:`surrogate_constant`
    at the current normalized residuals.

    Args:
        g: Projections ``(view, row, col)``.
        weights: Surrogate weights :math:`\\tilde{W}`, zero for saturated
            measurements.
        constant: Sum of the surrogate offsets :math:`\\sum_i \\kappa_i`.
        prior: The regularizer.
        model: The system model.
    """

    def __init__(
        self,
        g: np.ndarray,
        weights: np.ndarray,
        constant: float,
        prior: QGGMRF,
        model: SystemModel,
    ):
        self.g = g
        self.weights = weights
        self.constant = constant
        self.prior = prior
        self.model = model

    @classmethod
    def at(
        cls,
        f: np.ndarray,
        g: np.ndarray,
        W: np.ndarray,
        T: float,
        prior: QGGMRF,
        model: SystemModel,
    ) -> "SurrogateObjective":
        """The majorizer touching the robust cost at ``f``."""
        e = (g - model.forward(f)) * np.sqrt(W)
        return cls(
            g,
            W * surrogate_weight(e, T),
            float(np.sum(surrogate_constant(e, T))),
            prior,
            model,
        )

    def project(self, f: np.ndarray) -> np.ndarray:
        return self.model.forward(f)

    def value(self, f: np.ndarray, Af: Optional[np.ndarray] = None) -> float:
        if Af is None:
            Af = self.project(f)
        r = self.g - Af
        data = 0.5 * float(np.sum(self.weights * r * r)) + 0.5 * self.constant
        return data + self.prior.value(f)

    def gradient(self, f: np.ndarray, Af: Optional[np.ndarray] = None) -> np.ndarray:
        if Af is None:
            Af = self.project(f)
        return -self.model.back(self.weights * (self.g - Af)) + self.prior.gradient(f)

    def lipschitz(self, n_iter: int = 10, margin: float = 1.1) -> float:
        """Upper estimate of the Lipschitz constant of :meth:`gradient`."""
        data = power_iteration(self.model, self.weights, n_iter=n_iter)
        return margin * data + self.prior.lipschitz()


def power_iteration(model: SystemModel, weights: np.ndarray, n_iter: int = 10) -> float:
    """Estimates the largest eigenvalue of :math:`A^T \\mathrm{diag}(w) A`."""
    x = np.random.default_rng(0).standard_normal(model.volume_shape)
    x /= np.linalg.norm(x)
    eigenvalue = 0.0
    for _ in range(n_iter):
        y = model.back(weights * model.forward(x))
        eigenvalue = float(np.linalg.norm(y))
        if eigenvalue == 0:
            break
        x = y / eigenvalue
    return eigenvalue


def ogm(
    objective: SurrogateObjective,
    x0: np.ndarray,
    lipschitz: float,
    n_iter: int,
    nonneg: bool = True,
) -> Tuple[np.ndarray, float]:
    """Projected optimized gradient method with function restart.

    Momentum is reset whenever the objective increases. Forward projections
    of the momentum points are combined linearly from those of the iterates,
    so each iteration costs one forward and one back projection.

    Args:
        objective: The smooth objective.
        x0: Feasible starting point.
        lipschitz: Lipschitz constant of the gradient.
        n_iter: Number of iterations.
        nonneg: Project onto the non-negative orthant.

    Returns:
        The iterate with the lowest objective, ``x0`` included, and its value.
    """
    x = x0
    Ax = objective.project(x)
    fx = objective.value(x, Ax)
    if not math.isfinite(fx):
        raise RmbirDivergenceError(f"Non-finite objective {fx} at the start point.")
    best, best_value = x, fx
    y, Ay = x, Ax
    theta = 1.0
    for i in range(n_iter):
        step = y - objective.gradient(y, Ay) / lipschitz
        x_new = np.maximum(step, 0) if nonneg else step
        Ax_new = objective.project(x_new)
        f_new = objective.value(x_new, Ax_new)
        if not math.isfinite(f_new):
            raise RmbirDivergenceError(
                f"Non-finite objective {f_new} at inner iteration {i}."
            )
        if f_new < best_value:
            best, best_value = x_new, f_new
        if f_new > fx:
            theta = 1.0
            y, Ay = x_new, Ax_new
        else:
            factor = 8 if i == n_iter - 1 else 4
            theta_new = 0.5 * (1 + math.sqrt(1 + factor * theta**2))
            a = (theta - 1) / theta_new
            b = theta / theta_new
            y = x_new + a * (x_new - x) + b * (x_new - y)
            Ay = Ax_new + a * (Ax_new - Ax) + b * (Ax_new - Ay)
            theta = theta_new
        x, Ax, fx = x_new, Ax_new, f_new
    return best, best_value


def select_threshold(
    residuals: np.ndarray,
    W: Union[WeightMatrix, np.ndarray, None],
    outlier_fraction: float,
) -> float:
    """The :math:`(1 - \\rho)` quantile of the normalized residuals.

    The smallest normalized residual whose empirical CDF reaches :math:`1 - \\rho`.

    Args:
        residuals: Residuals :math:`g - Af`.
        W: Weights used to normalize ``residuals``, or None if they are
            already normalized.
        outlier_fraction: Expected fraction :math:`\\rho \\in (0, 1)` of outliers.

    Returns:
        The threshold :math:`T`. If all normalized residuals are equal, a value
        just above them.
    """
    if not 0 < outlier_fraction < 1:
        raise ValueError(
            f"outlier_fraction must be in (0, 1) (got {outlier_fraction})."
        )
    e = np.abs(np.asarray(residuals, dtype=float))
    if W is not None:
        e = e * np.sqrt(_weights(W))
    e = e.ravel()
    if e.size == 0:
        raise ValueError("No residuals given.")
    if np.all(e == e[0]):
        return float(e[0]) + 1e-12 * max(float(e[0]), 1.0)
    return float(np.quantile(e, 1 - outlier_fraction, method="inverted_cdf"))


class RmbirResult(NamedTuple):
    """Reconstruction of one wavelength channel.

    volume: Attenuation ``(z, y, x)`` in 1/um.
    bragg_map: Binary ``(view, row, col)`` map of measurements with
        :math:`|e_i| \\ge T` at ``volume``.
    trace: Cost before the first and after each outer iteration.
    threshold: The Talwar threshold used.
    converged: Whether the tolerance was met before ``max_outer``.
    runtime: Wall time in seconds.
    """

    volume: np.ndarray
    bragg_map: np.ndarray
    trace: np.ndarray
    threshold: float
    converged: bool
    runtime: float


def _initial_volume(g: np.ndarray, model: SystemModel, params: RmbirParams):
    if InitKind(params.init) is InitKind.ZERO:
        return np.zeros(model.volume_shape)
    f = fbp_reconstruct(g, model)
    return np.maximum(f, 0) if params.nonneg else f


def inpaint_rows(g: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replaces the masked projections of each detector row by linear
    interpolation between the nearest unmasked pixels of that row.

    Masked pixels beyond the last unmasked pixel take its value. Rows that are
    masked everywhere are left unchanged.

    Args:
        g: Projections ``(view, row, col)``.
        mask: Boolean mask of the projections to replace, shaped like ``g``.

    Returns:
        A copy of ``g`` with the masked pixels replaced.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != g.shape:
        raise ValueError(f"Mask shape {mask.shape} does not match {g.shape}.")
    out = np.array(g, dtype=float)
    cols = np.arange(g.shape[-1])
    for v, r in zip(*np.nonzero(mask.any(axis=-1))):
        bad = mask[v, r]
        if bad.all():
            continue
        out[v, r, bad] = np.interp(cols[bad], cols[~bad], out[v, r, ~bad])
    return out


def _outlier_free_start(
    f: np.ndarray,
    g: np.ndarray,
    W: np.ndarray,
    T: float,
    model: SystemModel,
    params: RmbirParams,
) -> np.ndarray:
    """An FBP start computed without the projections flagged at ``f``."""
    flagged = np.abs(normalized_residuals(f, g, W, model)) >= T
    if not flagged.any():
        return f
    logger.debug(f"Inpainting {flagged.sum()} flagged projections for the start.")
    f = fbp_reconstruct(inpaint_rows(g, flagged), model)
    return np.maximum(f, 0) if params.nonneg else f


def rmbir_reconstruct(
    g: Union[np.ndarray, HyperSinogram],
    model: SystemModel,
    params: Optional[RmbirParams] = None,
    weights: Union[WeightMatrix, np.ndarray, None] = None,
    channel: int = 0,
) -> RmbirResult:
    """Robust model-based reconstruction of one wavelength channel.

    Majorization-minimization: each outer iteration replaces the Talwar
    penalty by its quadratic majorizer at the current residuals and lowers the
    majorizer with :func:`ogm`. Because the best inner iterate is kept, the
    cost never increases between outer iterations.

    With ``init="fbp"`` the iterations start from an FBP of the projections in
    which those with :math:`|e_i| \\ge T` at the plain FBP are replaced by
    :func:`inpaint_rows`, so outlier streaks do not enter the start. A
    quantile-selected threshold comes from a preliminary solve with
    :math:`T = \\infty`, which is then discarded.

    Args:
        g: Projections ``(view, row, col)``, or a projection HyperSinogram
            from which ``channel`` is taken.
        model: The system model.
        params: Solver options. Per-wavelength values are taken at ``channel``.
        weights: Statistical weights. Defaults to ones.
        channel: The wavelength index, used to select per-channel options.

    Returns:
        An :class:`RmbirResult`.
    """
    t0 = time.perf_counter()
    params = RmbirParams() if params is None else params
    params.validate()
    g = as_channel(g, channel)
    if g.shape != model.sinogram_shape:
        raise ValueError(
            f"Sinogram shape {g.shape} does not match the model's"
            f" {model.sinogram_shape}."
        )
    W = np.ones(g.shape) if weights is None else _weights(weights)
    if W.shape != g.shape:
        raise ValueError(f"Weights shape {W.shape} does not match {g.shape}.")
    prior = QGGMRF(params.sigma_for(channel), p=params.p, q=params.q, c=params.c)
    f = _initial_volume(g, model, params)

    def solve_surrogate(f, T):
        objective = SurrogateObjective.at(f, g, W, T, prior, model)
        L = objective.lipschitz(params.power_iterations, params.lipschitz_margin)
        return ogm(objective, f, L, params.max_inner, nonneg=params.nonneg)

    T = params.threshold_for(channel)
    if T is None:
        preliminary, _ = solve_surrogate(f, np.inf)
        e = normalized_residuals(preliminary, g, W, model)
        T = max(
            select_threshold(e, None, params.outlier_fraction_for(channel)),
            params.min_threshold,
        )
        logger.debug(f"Channel {channel}: selected threshold T = {T:.4g}.")
    if InitKind(params.init) is InitKind.FBP and math.isfinite(T):
        f = _outlier_free_start(f, g, W, T, model, params)

    def robust_cost(f):
        e = normalized_residuals(f, g, W, model)
        return 0.5 * float(np.sum(talwar(e, T))) + prior.value(f)

    trace = [robust_cost(f)]
    converged = False
    for it in range(params.max_outer):
        f_new, surrogate_value = solve_surrogate(f, T)
        value = robust_cost(f_new)
        previous = trace[-1]
        if not math.isfinite(value):
            raise RmbirDivergenceError(
                f"Non-finite cost {value} at outer iteration {it}."
            )
        if value > previous + DESCENT_TOLERANCE * abs(previous):
            raise RmbirDivergenceError(
                f"Cost increased from {previous:.10g} to {value:.10g} at outer"
                f" iteration {it}."
            )
        f = f_new
        trace.append(value)
        logger.debug(
            f"Channel {channel}, outer {it}: cost {value:.6g},"
            f" surrogate {surrogate_value:.6g}."
        )
        if previous - value <= params.tol * abs(previous):
            converged = True
            break

    e = normalized_residuals(f, g, W, model)
    bragg_map = (np.abs(e) >= T).astype(np.uint8)
    runtime = time.perf_counter() - t0
    logger.info(
        f"Channel {channel}: T = {T:.4g}, {len(trace) - 1} outer iterations,"
        f" cost {trace[-1]:.6g}, {bragg_map.mean():.2%} flagged, {runtime:.1f} s."
    )
    return RmbirResult(
        volume=f,
        bragg_map=bragg_map,
        trace=np.array(trace),
        threshold=float(T),
        converged=converged,
        runtime=runtime,
    )


class ReconstructionResult(NamedTuple):
    """Reconstructions of every wavelength channel.

    volumes: Attenuation ``(k, z, y, x)``.
    bragg_maps: Bragg maps ``(k, view, row, col)``.
    traces: Per-channel cost traces.
    thresholds: Per-channel Talwar thresholds.
    runtimes: Per-channel wall time in seconds.
    """

    volumes: HyperVolume
    bragg_maps: BraggMapStack
    traces: List[np.ndarray]
    thresholds: np.ndarray
    runtimes: np.ndarray


def _reconstruct_channel(
    k: int,
    g: np.ndarray,
    W: np.ndarray,
    model: SystemModel,
    params: RmbirParams,
) -> RmbirResult:
    try:
        return rmbir_reconstruct(g, model, params, weights=W, channel=k)
    except Exception as e:
        raise ChannelError(k, f"{type(e).__name__}: {e}") from e


def reconstruct_all(
    sino: HyperSinogram,
    model: SystemModel,
    params: Optional[RmbirParams] = None,
    *,
    workers: int = 1,
    progress: bool = False,
) -> ReconstructionResult:
    """Reconstructs every wavelength channel independently.

    Args:
        sino: Counts or projections. Weights are the counts, or
            :math:`I_0 e^{-g}` for projections, floored at ``weight_floor``.
        model: The system model.
        params: Solver options.
        workers: Number of worker processes.
        progress: Show a progress bar.

    Returns:
        A :class:`ReconstructionResult`.
    """
    params = RmbirParams() if params is None else params
    params.validate(n_channels=sino.shape[0])
    if sino.kind is SinogramKind.COUNTS:
        counts = np.asarray(sino.data, dtype=np.float64)
        sino = counts_to_projection(sino, floor=params.weight_floor)
    else:
        counts = sino.incident_flux * np.exp(-np.asarray(sino.data, dtype=np.float64))
    if sino.shape[1:] != model.sinogram_shape:
        raise ValueError(
            f"Sinogram shape {sino.shape} does not match the model's"
            f" {model.sinogram_shape}."
        )
    K = sino.shape[0]
    # Build the matrices once before they are shipped to the workers.
    _ = model.matrix, model.matrix_t, model.axial
    jobs = (
        joblib.delayed(_reconstruct_channel)(
            k,
            as_channel(sino, k),
            estimate_weights(counts[k], floor=params.weight_floor).data,
            model,
            params,
        )
        for k in tqdm(range(K), desc="Channels", disable=not progress)
    )
    results = joblib.Parallel(n_jobs=workers)(jobs)
    return ReconstructionResult(
        volumes=HyperVolume(np.stack([r.volume for r in results])),
        bragg_maps=BraggMapStack(np.stack([r.bragg_map for r in results])),
        traces=[r.trace for r in results],
        thresholds=np.array([r.threshold for r in results]),
        runtimes=np.array([r.runtime for r in results]),
    )
