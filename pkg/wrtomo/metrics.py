"""Quantitative comparison of reconstructions, Bragg maps and crystal
signatures with simulated ground truth.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

#: Wavelengths with at least this fraction of Bragg-affected measurements
#: are reported as affected.
AFFECTED_FRACTION = 0.02


def nrmse(recon: np.ndarray, truth: np.ndarray) -> float:
    """Normalized root mean squared error, :math:`\\|r - t\\|_2 / \\|t\\|_2`."""
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recon.shape != truth.shape:
        raise ValueError(f"Shapes differ: {recon.shape} and {truth.shape}.")
    norm = np.linalg.norm(truth.ravel())
    if norm == 0:
        raise ValueError("NRMSE is undefined for an all-zero truth.")
    return float(np.linalg.norm((recon - truth).ravel()) / norm)


class Rates(NamedTuple):
    """Confusion-matrix rates. A rate is None when its denominator is zero."""

    tpr: Optional[float]
    fpr: Optional[float]
    precision: Optional[float]
    recall: Optional[float]

    def to_dict(self) -> Dict[str, Optional[float]]:
        return self._asdict()


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def binary_rates(predicted: np.ndarray, truth: np.ndarray) -> Rates:
    """True/false positive rates, precision and recall of a binary prediction."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"Shapes differ: {predicted.shape} and {truth.shape}.")
    for name, array in (("predicted", predicted), ("truth", truth)):
        if array.dtype != bool and not np.all((array == 0) | (array == 1)):
            raise ValueError(f"{name} must be binary.")
    predicted = predicted.astype(bool)
    truth = truth.astype(bool)
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    tn = int(np.sum(~predicted & ~truth))
    tpr = _ratio(tp, tp + fn)
    return Rates(
        tpr=tpr, fpr=_ratio(fp, fp + tn), precision=_ratio(tp, tp + fp), recall=tpr
    )


def spectral_profile(volumes: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean attenuation spectrum over ``mask``.

    Args:
        volumes: Attenuation ``(k, z, y, x)``.
        mask: Boolean ``(z, y, x)`` region.

    Returns:
        An array of length K.
    """
    volumes = np.asarray(volumes, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != volumes.shape[1:]:
        raise ValueError(
            f"Mask shape {mask.shape} does not match volumes {volumes.shape[1:]}."
        )
    if not mask.any():
        raise ValueError("The region is empty.")
    return volumes[:, mask].mean(axis=1)


def match_domains_to_grains(domains: np.ndarray, grains: np.ndarray) -> np.ndarray:
    """For each domain 1..P, the grain it overlaps most, or 0 if none.

    Returns:
        An array ``m`` with ``m[d - 1]`` the grain of domain ``d``.
    """
    domains = np.asarray(domains)
    grains = np.asarray(grains)
    P = int(domains.max(initial=0))
    G = int(grains.max(initial=0))
    overlap = np.zeros((P + 1, G + 1), dtype=np.int64)
    np.add.at(overlap, (domains.ravel(), grains.ravel()), 1)
    best = np.zeros(P, dtype=np.int64)
    for d in range(1, P + 1):
        if overlap[d, 1:].any():
            best[d - 1] = int(np.argmax(overlap[d, 1:])) + 1
    return best


@dataclass
class EvalReport:
    """Evaluation of one run against its ground truth.

    Args:
        nrmse_rmbir: Per-wavelength NRMSE of the robust reconstruction.
        nrmse_fbp: Per-wavelength NRMSE of FBP.
        affected: Per-wavelength flag, True when at least
            :data:`AFFECTED_FRACTION` of the measurements are Bragg-affected.
        bragg: Per-wavelength rates of the Bragg maps.
        grains: Per-grain signature rates, largest grains first.
        profiles: Mean spectra of the powder and crystal regions.
        runtime: Runtime statistics in seconds.
    """

    nrmse_rmbir: Optional[List[float]] = None
    nrmse_fbp: Optional[List[float]] = None
    affected: List[bool] = field(default_factory=list)
    bragg: List[Dict[str, Any]] = field(default_factory=list)
    grains: List[Dict[str, Any]] = field(default_factory=list)
    profiles: Dict[str, List[float]] = field(default_factory=dict)
    runtime: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "nrmse_rmbir": self.nrmse_rmbir,
            "nrmse_fbp": self.nrmse_fbp,
            "affected": self.affected,
            "bragg": self.bragg,
            "grains": self.grains,
            "profiles": self.profiles,
            "runtime": self.runtime,
        }

    def summary(self) -> str:
        lines = []
        for name, values in (("R-MBIR", self.nrmse_rmbir), ("FBP", self.nrmse_fbp)):
            if values:
                lines.append(
                    f"{name} NRMSE: mean {np.mean(values):.4f},"
                    f" max {np.max(values):.4f}"
                )
        for grain in self.grains:
            tpr, fpr = grain["rates"]["tpr"], grain["rates"]["fpr"]
            lines.append(
                f"Grain {grain['grain']} ({grain['voxels']} voxels):"
                f" domain {grain['domain']}, TPR {tpr}, FPR {fpr}"
            )
        return "\n".join(lines)


def evaluate(
    truth_volume: np.ndarray,
    grain_labels: np.ndarray,
    *,
    support: Optional[np.ndarray] = None,
    bragg_truth: Optional[np.ndarray] = None,
    signature_truth: Optional[np.ndarray] = None,
    rmbir_volume: Optional[np.ndarray] = None,
    fbp_volume: Optional[np.ndarray] = None,
    bragg_maps: Optional[np.ndarray] = None,
    domains: Optional[np.ndarray] = None,
    signatures: Optional[Sequence[np.ndarray]] = None,
    runtimes: Optional[Sequence[float]] = None,
    n_grains: int = 4,
) -> EvalReport:
    """Compares the outputs of a run with the simulator's ground truth.

    Any output that is None is skipped.

    Args:
        truth_volume: Off-Bragg attenuation ``(k, z, y, x)``.
        grain_labels: True grain labels ``(z, y, x)``.
        support: Mask of the sample, used for the powder profile.
        bragg_truth: True Bragg maps ``(k, view, row, col)``.
        signature_truth: True signatures ``(grain, view, k)``.
        rmbir_volume: Robust reconstruction ``(k, z, y, x)``.
        fbp_volume: FBP reconstruction ``(k, z, y, x)``.
        bragg_maps: Estimated Bragg maps ``(k, view, row, col)``.
        domains: Segmented domains ``(z, y, x)``.
        signatures: Estimated signatures ``(view, k)`` of domains 1..P.
        runtimes: Per-channel solver runtimes.
        n_grains: Number of largest grains whose signatures are scored.

    Returns:
        The report.
    """
    truth_volume = np.asarray(truth_volume, dtype=float)
    grain_labels = np.asarray(grain_labels)
    K = truth_volume.shape[0]
    report = EvalReport()
    if rmbir_volume is not None:
        report.nrmse_rmbir = [
            nrmse(rmbir_volume[k], truth_volume[k]) for k in range(K)
        ]
    if fbp_volume is not None:
        report.nrmse_fbp = [nrmse(fbp_volume[k], truth_volume[k]) for k in range(K)]

    if bragg_truth is not None:
        bragg_truth = np.asarray(bragg_truth).astype(bool)
        fractions = bragg_truth.reshape(K, -1).mean(axis=1)
        report.affected = [bool(f >= AFFECTED_FRACTION) for f in fractions]
        if bragg_maps is not None:
            for k in range(K):
                rates = binary_rates(bragg_maps[k], bragg_truth[k])
                report.bragg.append(
                    {
                        "k": k,
                        "truth_fraction": float(fractions[k]),
                        "flagged_fraction": float(np.mean(bragg_maps[k])),
                        "rates": rates.to_dict(),
                    }
                )

    grain_mask = grain_labels > 0
    volumes = rmbir_volume if rmbir_volume is not None else fbp_volume
    regions = {"crystal": grain_mask}
    if support is not None:
        regions["powder"] = np.asarray(support, dtype=bool) & ~grain_mask
    for name, mask in regions.items():
        if not mask.any():
            continue
        report.profiles[f"{name}_truth"] = spectral_profile(truth_volume, mask).tolist()
        if volumes is not None:
            report.profiles[f"{name}_recon"] = spectral_profile(volumes, mask).tolist()

    if signature_truth is not None and domains is not None and signatures is not None:
        domains = np.asarray(domains)
        sizes = np.bincount(grain_labels.ravel(), minlength=signature_truth.shape[0] + 1)[1:]
        by_size = sorted(range(1, sizes.size + 1), key=lambda g: (-sizes[g - 1], g))
        owner = match_domains_to_grains(domains, grain_labels)
        for grain in by_size[:n_grains]:
            # The domain overlapping this grain most, among those assigned to it.
            candidates = np.flatnonzero(owner == grain) + 1
            domain = 0
            predicted = np.zeros_like(signature_truth[grain - 1])
            if candidates.size:
                overlaps = [
                    np.sum((domains == d) & (grain_labels == grain)) for d in candidates
                ]
                domain = int(candidates[int(np.argmax(overlaps))])
                predicted = np.asarray(signatures[domain - 1])
            rates = binary_rates(predicted, signature_truth[grain - 1])
            report.grains.append(
                {
                    "grain": grain,
                    "voxels": int(sizes[grain - 1]),
                    "domain": domain,
                    "rates": rates.to_dict(),
                }
            )

    if runtimes is not None and len(runtimes):
        runtimes = np.asarray(runtimes, dtype=float)
        report.runtime = {
            "total": float(runtimes.sum()),
            "mean_per_channel": float(runtimes.mean()),
            "max_per_channel": float(runtimes.max()),
        }
    return report
