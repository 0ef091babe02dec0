import logging
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from ..core.types import BraggMapStack, CrystalSignature, HyperVolume, LabelVolume
from ..projector import SystemModel
from .options import SignatureParams
from .segment import (
    AnomalyComponent,
    connected_components_2d,
    connected_components_3d,
    kmeans_segment,
)

logger = logging.getLogger(__name__)


class MatchRecord(NamedTuple):
    """The best domain found for one anomaly.

    domain_id: Best-scoring domain, or 0 if there are no domains.
    component: Index of the anomaly.
    view: View index of the anomaly.
    k: Wavelength index of the anomaly.
    score: Correlation score with ``domain_id``.
    accepted: Whether ``score`` reached the threshold.
    """

    domain_id: int
    component: int
    view: int
    k: int
    score: float
    accepted: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain_id": self.domain_id,
            "component": self.component,
            "view": self.view,
            "k": self.k,
            "score": self.score,
            "accepted": self.accepted,
        }


def project_and_binarize(
    mask: np.ndarray,
    model: SystemModel,
    view: int,
    binarize_frac: float = 0.5,
) -> np.ndarray:
    """Binary footprint of a domain at one view.

    Args:
        mask: Binary ``(z, y, x)`` domain mask.
        model: The system model.
        view: View index.
        binarize_frac: Pixels whose path length through the domain exceeds
            ``binarize_frac * voxel_pitch`` are set.

    Returns:
        A boolean ``(row, col)`` image.
    """
    path = model.forward_view(np.asarray(mask, dtype=float), view)
    return path > binarize_frac * model.geometry.voxel_pitch


def correlation_score(p: np.ndarray, q: np.ndarray) -> float:
    """Agreement of two binary images.

    .. math::

        S = 1 - \\frac{|p \\wedge \\bar{q}| + |\\bar{p} \\wedge q|}{|p| + |q|}

    which equals the Dice coefficient :math:`2|p \\wedge q| / (|p| + |q|)`.
    """
    p = np.asarray(p, dtype=bool)
    q = np.asarray(q, dtype=bool)
    if p.shape != q.shape:
        raise ValueError(f"Image shapes differ: {p.shape} and {q.shape}.")
    total = int(p.sum()) + int(q.sum())
    if total == 0:
        raise ValueError("The correlation score of two empty images is undefined.")
    disagree = int(np.sum(p & ~q)) + int(np.sum(~p & q))
    return 1 - disagree / total


class MatchResult(NamedTuple):
    signatures: List[CrystalSignature]
    records: List[MatchRecord]


def match_signatures(
    domains: LabelVolume,
    anomalies: Sequence[AnomalyComponent],
    model: SystemModel,
    score_threshold: float = 0.5,
    *,
    n_wavelengths: int,
    binarize_frac: float = 0.5,
) -> MatchResult:
    """Assigns each anomaly to the domain whose projection it best matches.

    Every anomaly at view :math:`\\phi` and wavelength :math:`k` is scored
    against the binarized projection of every domain at :math:`\\phi`. The
    highest score wins, ties going to the smaller domain id, and if it reaches
    ``score_threshold`` the winning domain's signature bit
    :math:`(\\phi, k)` is set.

    Args:
        domains: Domains 1..P.
        anomalies: Anomalies from :func:`connected_components_2d`.
        model: The system model.
        score_threshold: Minimum score of an accepted match, in (0, 1).
        n_wavelengths: Number of wavelength channels K.
        binarize_frac: See :func:`project_and_binarize`.

    Returns:
        One signature per domain and one record per anomaly.
    """
    if not 0 < score_threshold < 1:
        raise ValueError(f"score_threshold must be in (0, 1) (got {score_threshold}).")
    g = model.geometry
    P = domains.n_labels
    V = g.n_views
    bits = np.zeros((P, V, n_wavelengths), dtype=np.uint8)
    scores = np.full((P, V, n_wavelengths), np.nan)
    masks = [domains.mask(d + 1) for d in range(P)]
    footprints = {}
    for v in sorted({a.view for a in anomalies}) if P else ():
        footprints[v] = np.stack(
            [project_and_binarize(m, model, v, binarize_frac) for m in masks]
        )

    records = []
    for i, anomaly in enumerate(anomalies):
        if not 0 <= anomaly.k < n_wavelengths:
            raise ValueError(
                f"Anomaly {i} has wavelength index {anomaly.k}, but there are"
                f" {n_wavelengths} wavelengths."
            )
        if P == 0:
            records.append(MatchRecord(0, i, anomaly.view, anomaly.k, 0.0, False))
            continue
        s = np.array(
            [correlation_score(fp, anomaly.pixels) for fp in footprints[anomaly.view]]
        )
        best = int(np.argmax(s))
        accepted = bool(s[best] >= score_threshold)
        if accepted:
            v, k = anomaly.view, anomaly.k
            bits[best, v, k] = 1
            scores[best, v, k] = np.fmax(scores[best, v, k], s[best])
        records.append(
            MatchRecord(best + 1, i, anomaly.view, anomaly.k, float(s[best]), accepted)
        )
    n_accepted = sum(r.accepted for r in records)
    logger.info(f"Matched {n_accepted} of {len(records)} anomalies to {P} domains.")
    signatures = [
        CrystalSignature(d + 1, bits[d], scores=scores[d]) for d in range(P)
    ]
    return MatchResult(signatures, records)


class SignatureResult(NamedTuple):
    """Output of :func:`extract_signatures`.

    classes: The k-means class map.
    domains: The segmented domains.
    sizes: Voxel counts of the domains.
    anomalies: The Bragg-map anomalies.
    signatures: One signature per domain.
    records: One match record per anomaly.
    """

    classes: LabelVolume
    domains: LabelVolume
    sizes: np.ndarray
    anomalies: List[AnomalyComponent]
    signatures: List[CrystalSignature]
    records: List[MatchRecord]


def extract_signatures(
    volumes: Union[HyperVolume, np.ndarray],
    bragg: BraggMapStack,
    model: SystemModel,
    params: Optional[SignatureParams] = None,
) -> SignatureResult:
    """Segments domains, splits Bragg maps into anomalies and matches them.

    Args:
        volumes: Reconstructions ``(k, z, y, x)``.
        bragg: Bragg maps ``(k, view, row, col)``.
        model: The system model.
        params: Segmentation and matching options.

    Returns:
        A :class:`SignatureResult`.
    """
    params = SignatureParams() if params is None else params
    params.validate()
    classes = kmeans_segment(volumes, params.n_classes, seed=params.seed)
    foreground = min(params.foreground, classes.n_labels)
    domains, sizes = connected_components_3d(
        classes, foreground, params.connectivity, params.min_voxels
    )
    anomalies = connected_components_2d(
        bragg, model.geometry.angles, min_area=params.min_area
    )
    signatures, records = match_signatures(
        domains,
        anomalies,
        model,
        params.score_threshold,
        n_wavelengths=bragg.shape[0],
        binarize_frac=params.binarize_frac,
    )
    return SignatureResult(classes, domains, sizes, anomalies, signatures, records)
