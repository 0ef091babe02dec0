import logging
from typing import NamedTuple, Optional

import joblib
import numpy as np
from scipy import stats
from tqdm import tqdm

from ..core.types import (
    BraggMapStack,
    HyperSinogram,
    HyperVolume,
    SinogramKind,
    ViewGeometry,
    WavelengthGrid,
)
from ..projector import SystemModel
from .phantom import GrainPhantom

logger = logging.getLogger(__name__)


class SimulationResult(NamedTuple):
    """Simulated measurements and their ground truth.

    counts: Measured counts, ``(k, view, row, col)``.
    bragg_truth: Measurements whose ray crosses a grain in Bragg condition.
    truth_volume: Off-Bragg attenuation, ``(k, z, y, x)``.
    signature_truth: Per grain, the ``(view, k)`` pattern of Bragg events,
        shape ``(P, views, K)``.
    projections: Noiseless projections, ``(k, view, row, col)``.
    """

    counts: HyperSinogram
    bragg_truth: BraggMapStack
    truth_volume: HyperVolume
    signature_truth: np.ndarray
    projections: np.ndarray


def poisson_counts(
    mean: np.ndarray, seed: int, k: int, view: int
) -> np.ndarray:
    """Poisson counts by inverse CDF of a per-pixel uniform.

    The uniforms come from a Philox stream keyed by ``(seed, k, view)`` and are
    consumed in row-major pixel order, so the result depends only on the key
    and ``mean``. For a fixed key the counts are non-decreasing in ``mean``.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, k, view])))
    u = np.maximum(rng.random(mean.shape), np.finfo(float).tiny)
    return stats.poisson.ppf(u, mean)


def _sample_channel(mean: np.ndarray, seed: int, k: int) -> np.ndarray:
    return np.stack(
        [poisson_counts(mean[v], seed, k, v) for v in range(mean.shape[0])]
    )


def simulate_measurements(
    phantom: GrainPhantom,
    geometry: ViewGeometry,
    grid: WavelengthGrid,
    incident_flux: float,
    seed: int,
    *,
    noise: bool = True,
    bragg_fraction: float = 0.1,
    min_excess: float = 0.0,
    model: Optional[SystemModel] = None,
    workers: int = 1,
    progress: bool = False,
) -> SimulationResult:
    """Simulates wavelength-resolved transmission counts of ``phantom``.

    For each wavelength :math:`\\lambda_k` and view :math:`\\phi_v`, the mean
    count is :math:`I_0 \\exp(-[A f(\\lambda_k, \\phi_v)])`. The projection is
    assembled by linearity from the off-Bragg volume and the projections of
    the individual grains weighted by their trace contributions.

    Args:
        phantom: The phantom.
        geometry: Acquisition geometry. Its volume must match the phantom.
        grid: Wavelength grid. Must equal the phantom's grid.
        incident_flux: Open-beam counts per pixel, :math:`I_0`.
        seed: Non-negative seed of the Poisson noise.
        noise: If False, the mean counts are returned.
        bragg_fraction: A grain is in Bragg condition when its trace
            contribution exceeds this fraction of its baseline.
        min_excess: A measurement counts as Bragg-affected only where the
            grain adds more than this to its line integral, :math:`-\\ln`
            of the transmission. Zero keeps every ray that touches the grain.
        model: A prebuilt system model for ``geometry``.
        workers: Number of processes used to draw the noise.
        progress: Show progress bars.

    Returns:
        A :class:`SimulationResult`.
    """
    if not incident_flux > 0:
        raise ValueError(f"incident_flux must be > 0 (got {incident_flux}).")
    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer (got {seed}).")
    if not bragg_fraction > 0:
        raise ValueError(f"bragg_fraction must be > 0 (got {bragg_fraction}).")
    if not min_excess >= 0:
        raise ValueError(f"min_excess must be >= 0 (got {min_excess}).")
    if geometry.volume_shape != phantom.shape:
        raise ValueError(
            f"Geometry volume {geometry.volume_shape} does not match the"
            f" phantom {phantom.shape}."
        )
    if grid != phantom.grid:
        raise ValueError("The wavelength grid does not match the phantom's.")
    if model is None:
        model = SystemModel(geometry)

    K, V = grid.count, geometry.n_views
    P = phantom.n_grains
    projections = np.stack(
        [
            model.forward(phantom.reference_volume(k))
            for k in tqdm(range(K), desc="Baseline", disable=not progress)
        ]
    )
    bragg = np.zeros(projections.shape, dtype=bool)
    signature_truth = np.zeros((P, V, K), dtype=np.uint8)
    for label in range(1, P + 1):
        material = phantom.materials[label]
        table = material.trace_table(geometry.angles)
        footprint = model.forward(phantom.labels.mask(label).astype(float))
        active = table > bragg_fraction * material.baseline[:, None]
        touched = footprint > 1e-9 * geometry.voxel_pitch
        for k in range(K):
            excess = table[k, :, None, None] * footprint
            projections[k] += excess
            visible = active[k, :, None, None] & touched & (excess > min_excess)
            bragg[k] |= visible
            signature_truth[label - 1, :, k] = visible.any(axis=(1, 2))
        logger.debug(
            f"Grain {label}: Bragg condition in {active.mean():.2%} of"
            " (wavelength, view) cells."
        )

    mean = incident_flux * np.exp(-projections)
    if noise:
        channels = joblib.Parallel(n_jobs=workers)(
            joblib.delayed(_sample_channel)(mean[k], int(seed), k)
            for k in tqdm(range(K), desc="Noise", disable=not progress)
        )
        counts = np.stack(channels)
    else:
        counts = mean
    logger.info(
        f"Simulated {K} wavelengths x {V} views;"
        f" {bragg.mean():.2%} of measurements are Bragg-affected."
    )
    return SimulationResult(
        counts=HyperSinogram(counts, SinogramKind.COUNTS, incident_flux),
        bragg_truth=BraggMapStack(bragg),
        truth_volume=phantom.ground_truth(),
        signature_truth=signature_truth,
        projections=projections,
    )
