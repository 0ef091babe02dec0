import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.cluster.vq import kmeans2
from skimage import measure

from ..core.types import BraggMapStack, HyperVolume, LabelVolume, _frozen_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AnomalyComponent:
    """One connected region of a Bragg map.

    Args:
        view: View index.
        angle: View angle in degrees.
        k: Wavelength index.
        pixels: Full-frame binary ``(row, col)`` image of the component.
    """

    view: int
    angle: float
    k: int
    pixels: np.ndarray

    def __post_init__(self):
        pixels = _frozen_array(np.asarray(self.pixels, dtype=bool), bool)
        if pixels.ndim != 2 or not pixels.any():
            raise ValueError("An anomaly must be a nonempty 2D image.")
        object.__setattr__(self, "pixels", pixels)

    @property
    def area(self) -> int:
        return int(self.pixels.sum())


def kmeans_segment(
    hv: Union[HyperVolume, np.ndarray],
    n_classes: int,
    seed: int = 0,
    n_iter: int = 100,
) -> LabelVolume:
    """Clusters voxels by their attenuation spectra.

    Uses k-means with k-means++ seeding. Classes are numbered by ascending
    centroid norm, so class 0 is the least attenuating.

    Args:
        hv: Reconstructions ``(k, z, y, x)``.
        n_classes: Number of classes, at least 2.
        seed: Seed of the initialization.
        n_iter: Number of k-means iterations.

    Returns:
        The class map ``(z, y, x)``.
    """
    data = np.asarray(hv.data if isinstance(hv, HyperVolume) else hv, dtype=float)
    if data.ndim != 4:
        raise ValueError(f"Expected a (k, z, y, x) volume, got shape {data.shape}.")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2 (got {n_classes}).")
    spectra = data.reshape(data.shape[0], -1).T
    n_distinct = np.unique(spectra, axis=0).shape[0]
    if n_classes > n_distinct:
        raise ValueError(
            f"Cannot form {n_classes} classes from {n_distinct} distinct spectra."
        )
    centroids, assignment = kmeans2(
        spectra, n_classes, iter=n_iter, minit="++", seed=seed
    )
    present = np.unique(assignment)
    if present.size < n_classes:
        logger.warning(
            f"k-means left {n_classes - present.size} of {n_classes} classes empty."
        )
    order = present[np.argsort(np.linalg.norm(centroids[present], axis=1), kind="stable")]
    relabel = np.zeros(n_classes, dtype=np.int32)
    relabel[order] = np.arange(order.size)
    return LabelVolume(relabel[assignment].reshape(data.shape[1:]))


def _filtered_labels(
    mask: np.ndarray, connectivity: int, min_size: int
) -> Tuple[np.ndarray, np.ndarray]:
    labels = measure.label(mask, background=0, connectivity=connectivity)
    sizes = np.bincount(labels.ravel())[1:]
    keep = np.flatnonzero(sizes >= min_size) + 1
    relabel = np.zeros(sizes.size + 1, dtype=np.int32)
    relabel[keep] = np.arange(1, keep.size + 1)
    return relabel[labels], sizes[keep - 1]


def connected_components_3d(
    class_map: Union[LabelVolume, np.ndarray],
    foreground: int,
    connectivity: int = 3,
    min_voxels: int = 8,
) -> Tuple[LabelVolume, np.ndarray]:
    """Labels connected regions of one class.

    Components are numbered in raster order of their first voxel.

    Args:
        class_map: Class map ``(z, y, x)``.
        foreground: The class to label.
        connectivity: 1 (faces) to 3 (full 26-neighborhood).
        min_voxels: Smaller components are dropped.

    Returns:
        The domains 1..P and their voxel counts.
    """
    classes = class_map.labels if isinstance(class_map, LabelVolume) else class_map
    classes = np.asarray(classes)
    if classes.ndim != 3:
        raise ValueError(f"Expected a 3D class map, got shape {classes.shape}.")
    if not 0 <= foreground <= classes.max(initial=0):
        raise ValueError(
            f"Foreground class {foreground} is not in the class map"
            f" (classes 0..{classes.max(initial=0)})."
        )
    labels, sizes = _filtered_labels(classes == foreground, connectivity, min_voxels)
    logger.debug(f"Found {sizes.size} domains of class {foreground}.")
    return LabelVolume(labels), sizes


def connected_components_2d(
    bragg: Union[BraggMapStack, np.ndarray],
    angles: Optional[Sequence[float]] = None,
    min_area: int = 4,
) -> List[AnomalyComponent]:
    """Splits every Bragg map into 8-connected anomalies.

    Args:
        bragg: Bragg maps ``(k, view, row, col)``.
        angles: View angles in degrees. Defaults to the view indices.
        min_area: Smaller components are dropped.

    Returns:
        Anomalies ordered by wavelength, then view, then label.
    """
    data = bragg.data if isinstance(bragg, BraggMapStack) else BraggMapStack(bragg).data
    K, V = data.shape[:2]
    if angles is None:
        angles = np.arange(V, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (V,):
        raise ValueError(f"Expected {V} view angles, got {angles.shape}.")
    anomalies = []
    for k in range(K):
        for v in range(V):
            if not data[k, v].any():
                continue
            labels, sizes = _filtered_labels(data[k, v], 2, min_area)
            for label in range(1, sizes.size + 1):
                anomalies.append(
                    AnomalyComponent(
                        view=v, angle=float(angles[v]), k=k, pixels=labels == label
                    )
                )
    logger.debug(f"Found {len(anomalies)} anomalies.")
    return anomalies
