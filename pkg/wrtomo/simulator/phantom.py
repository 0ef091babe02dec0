import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core.types import HyperVolume, LabelVolume, WavelengthGrid
from .material import Material, crystal_material, powder_material

logger = logging.getLogger(__name__)


class PhantomParamsError(ValueError):
    pass


@dataclass
class PhantomParams:
    """Options for :func:`generate_phantom`. Lengths are in voxels.

    Args:
        n_grains: Number of single-crystal grains.
        grain_radius: ``(min, max)`` radius of the spherical grains.
        cylinder_radius: Radius of the powder cylinder. Its axis is the z axis.
        min_gap: Minimum surface-to-surface distance between grains.
        max_attempts: Placement attempts per grain before giving up.
    """

    n_grains: int = 4
    grain_radius: Tuple[float, float] = (5.0, 8.0)
    cylinder_radius: float = 28.0
    min_gap: float = 2.0
    max_attempts: int = 1000

    def validate(self) -> None:
        if int(self.n_grains) != self.n_grains or self.n_grains < 0:
            raise PhantomParamsError(
                f"n_grains must be a non-negative integer (got {self.n_grains})."
            )
        rmin, rmax = self.grain_radius
        if not 1.5 <= rmin <= rmax:
            raise PhantomParamsError(
                f"grain_radius must satisfy 1.5 <= min <= max (got {self.grain_radius})."
            )
        if not self.cylinder_radius > 0:
            raise PhantomParamsError(
                f"cylinder_radius must be > 0 (got {self.cylinder_radius})."
            )
        if self.n_grains and rmax > self.cylinder_radius:
            raise PhantomParamsError(
                f"Grains of radius {rmax} do not fit inside a cylinder of radius"
                f" {self.cylinder_radius}."
            )
        if self.min_gap < 0:
            raise PhantomParamsError(f"min_gap must be >= 0 (got {self.min_gap}).")
        if self.max_attempts < 1:
            raise PhantomParamsError(
                f"max_attempts must be >= 1 (got {self.max_attempts})."
            )


@dataclass(frozen=True, eq=False)
class GrainPhantom:
    """Single-crystal grains embedded in a powder cylinder.

    Args:
        labels: 0 for powder and background, 1..P for grains.
        support: Boolean ``(z, y, x)`` mask of the cylinder, grains included.
        materials: Material of each label. Label 0 is the powder.
        voxel_pitch: Voxel size in microns.
    """

    labels: LabelVolume
    support: np.ndarray
    materials: Mapping[int, Material]
    voxel_pitch: float = 50.0

    def __post_init__(self):
        support = np.asarray(self.support, dtype=bool)
        if support.shape != self.labels.labels.shape:
            raise ValueError(
                f"Support shape {support.shape} does not match the labels"
                f" {self.labels.labels.shape}."
            )
        if np.any(self.labels.labels[~support]):
            raise ValueError("Every grain must lie inside the support.")
        materials = dict(self.materials)
        missing = set(range(self.labels.n_labels + 1)).difference(materials)
        if missing:
            raise ValueError(f"Labels {sorted(missing)} have no material.")
        if any(m.grid != materials[0].grid for m in materials.values()):
            raise ValueError("All materials must share one wavelength grid.")
        support.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "materials", materials)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.labels.labels.shape

    @property
    def n_grains(self) -> int:
        return self.labels.n_labels

    @property
    def grid(self) -> WavelengthGrid:
        return self.materials[0].grid

    def region_masks(self) -> Dict[int, np.ndarray]:
        """Boolean masks of the powder (key 0) and of each grain."""
        masks = {0: self.support & (self.labels.labels == 0)}
        for label in range(1, self.n_grains + 1):
            masks[label] = self.labels.mask(label)
        return masks

    def reference_volume(self, k: int) -> np.ndarray:
        """Off-Bragg attenuation at wavelength index ``k``, shape ``(z, y, x)``."""
        volume = np.zeros(self.shape)
        for label, mask in self.region_masks().items():
            volume[mask] = self.materials[label].baseline[k]
        return volume

    def volume(self, k: int, angle: float) -> np.ndarray:
        """Attenuation at wavelength index ``k`` and rotation ``angle`` (degrees)."""
        volume = self.reference_volume(k)
        for label in range(1, self.n_grains + 1):
            extra = self.materials[label].trace_table([angle])[k, 0]
            volume[self.labels.mask(label)] += extra
        return volume

    def ground_truth(self, angle: Optional[float] = None) -> HyperVolume:
        """Attenuation at every wavelength, off-Bragg if ``angle`` is None."""
        K = self.grid.count
        if angle is None:
            return HyperVolume(np.stack([self.reference_volume(k) for k in range(K)]))
        return HyperVolume(np.stack([self.volume(k, angle) for k in range(K)]))


def _ball(shape, center, radius) -> np.ndarray:
    z, y, x = np.ogrid[: shape[0], : shape[1], : shape[2]]
    cz, cy, cx = center
    return (z - cz) ** 2 + (y - cy) ** 2 + (x - cx) ** 2 <= radius**2


def cylinder_mask(shape: Tuple[int, int, int], radius: float) -> np.ndarray:
    """A z-aligned cylinder of ``radius`` voxels centered in the ``(z, y, x)`` grid."""
    nz, ny, nx = shape
    y, x = np.ogrid[:ny, :nx]
    disk = (y - 0.5 * (ny - 1)) ** 2 + (x - 0.5 * (nx - 1)) ** 2 <= radius**2
    return np.broadcast_to(disk, shape).copy()


def generate_phantom(
    seed: int,
    n_grains: int,
    grain_radius: Tuple[float, float],
    cylinder_radius: float,
    *,
    shape: Tuple[int, int, int],
    grid: WavelengthGrid,
    powder: Optional[Material] = None,
    crystal: Optional[Material] = None,
    grain_materials: Optional[Mapping[int, Material]] = None,
    voxel_pitch: float = 50.0,
    min_gap: float = 2.0,
    max_attempts: int = 1000,
) -> GrainPhantom:
    """Places non-overlapping spherical grains inside a powder cylinder.

    Grain centers are drawn uniformly over the z extent and over the disk in
    which a grain of the drawn radius fits inside the cylinder. Spheres are
    clipped at the top and bottom of the volume. Labels follow placement order.

    Args:
        seed: Seed for the random placement.
        n_grains: Number of grains.
        grain_radius: ``(min, max)`` grain radius in voxels.
        cylinder_radius: Cylinder radius in voxels.
        shape: Volume shape ``(nz, ny, nx)``.
        grid: The wavelength grid of the materials.
        powder: Material of the cylinder. Defaults to :func:`powder_material`.
        crystal: Material shared by all grains. Defaults to :func:`crystal_material`.
        grain_materials: Per-grain overrides keyed by label.
        voxel_pitch: Voxel size in microns.
        min_gap: Minimum surface-to-surface distance between grains, in voxels.
        max_attempts: Placement attempts per grain.

    Returns:
        The phantom.
    """
    params = PhantomParams(
        n_grains=n_grains,
        grain_radius=tuple(grain_radius),
        cylinder_radius=cylinder_radius,
        min_gap=min_gap,
        max_attempts=max_attempts,
    )
    params.validate()
    nz, ny, nx = shape
    if 2 * cylinder_radius > min(nx, ny):
        raise ValueError(
            f"A cylinder of radius {cylinder_radius} does not fit in an"
            f" {ny} x {nx} slice."
        )
    if powder is None:
        powder = powder_material(grid)
    if crystal is None:
        crystal = crystal_material(grid)

    rng = np.random.default_rng(seed)
    support = cylinder_mask(shape, cylinder_radius)
    labels = np.zeros(shape, dtype=np.int32)
    placed = []
    rmin, rmax = params.grain_radius
    for label in range(1, n_grains + 1):
        for _ in range(params.max_attempts):
            radius = rng.uniform(rmin, rmax)
            r_center = (cylinder_radius - radius) * np.sqrt(rng.uniform())
            angle = rng.uniform(0, 2 * np.pi)
            center = (
                rng.uniform(0, nz - 1),
                0.5 * (ny - 1) + r_center * np.sin(angle),
                0.5 * (nx - 1) + r_center * np.cos(angle),
            )
            if all(
                np.linalg.norm(np.subtract(center, c)) >= radius + r + params.min_gap
                for c, r in placed
            ):
                break
        else:
            raise ValueError(
                f"Could not place grain {label} of {n_grains} after"
                f" {params.max_attempts} attempts. Reduce n_grains or grain_radius."
            )
        placed.append((center, radius))
        labels[_ball(shape, center, radius) & support] = label
        logger.debug(
            f"Placed grain {label} at {np.round(center, 2).tolist()}"
            f" with radius {radius:.2f}."
        )

    materials = {0: powder}
    for label in range(1, n_grains + 1):
        materials[label] = crystal
    if grain_materials:
        for label, material in grain_materials.items():
            if not 1 <= label <= n_grains:
                raise ValueError(
                    f"Material override for label {label}, but there are"
                    f" {n_grains} grains."
                )
            materials[label] = material
    return GrainPhantom(
        LabelVolume(labels), support, materials, voxel_pitch=voxel_pitch
    )


def grains_by_size(phantom: GrainPhantom) -> Sequence[int]:
    """Grain labels ordered by decreasing voxel count, ties by label."""
    sizes = phantom.labels.sizes()
    return [int(i) + 1 for i in np.lexsort((np.arange(sizes.size), -sizes))]
