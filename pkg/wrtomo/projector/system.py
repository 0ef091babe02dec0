import logging
from enum import Enum
from functools import cached_property
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from ..core.types import ViewGeometry
from .kernels import csr_matmat, joseph_triplets

logger = logging.getLogger(__name__)


class ProjectorKernel(Enum):
    """Supported interpolation kernels."""

    JOSEPH: str = "joseph"


def interpolation_matrix(
    n_out: int, out_pitch: float, n_in: int, in_pitch: float
) -> sp.csr_matrix:
    """Linear interpolation from one centered 1D grid onto another.

    Samples outside the input grid interpolate against zero.

    Returns:
        A sparse ``(n_out, n_in)`` matrix.
    """
    positions = (np.arange(n_out) - 0.5 * (n_out - 1)) * out_pitch / in_pitch
    positions += 0.5 * (n_in - 1)
    lower = np.floor(positions).astype(np.int64)
    w1 = positions - lower
    rows = np.concatenate([np.arange(n_out), np.arange(n_out)])
    cols = np.concatenate([lower, lower + 1])
    vals = np.concatenate([1 - w1, w1])
    keep = (cols >= 0) & (cols < n_in) & (vals > 0)
    return sp.csr_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=(n_out, n_in)
    )


class SystemModel:
    """The parallel-beam projection matrix :math:`A` for a :class:`ViewGeometry`.

    The in-plane part of :math:`A` is a sparse Joseph matrix shared by all
    slabs. Detector rows resample the slabs along z by linear interpolation,
    which is the identity when rows and slabs coincide. The back projection is
    the exact transpose of the forward projection.

    Args:
        geometry: The acquisition geometry.
        kernel: The interpolation kernel.
        supersample: Number of rays traced per detector column.
    """

    def __init__(
        self,
        geometry: ViewGeometry,
        kernel: Union[ProjectorKernel, str] = ProjectorKernel.JOSEPH,
        supersample: int = 1,
    ):
        if isinstance(kernel, str):
            try:
                kernel = ProjectorKernel(kernel.lower())
            except ValueError:
                valid = [k.value for k in ProjectorKernel]
                raise ValueError(
                    f"Projector kernel must be one of {valid!r}, got {kernel!r}."
                )
        if int(supersample) != supersample or supersample < 1:
            raise ValueError(f"supersample must be a positive integer (got {supersample}).")
        self.geometry = geometry
        self.kernel = kernel
        self.supersample = int(supersample)

    def __repr__(self) -> str:
        g = self.geometry
        return (
            f"{type(self).__name__}(views={g.n_views},"
            f" detector=({g.detector_rows}, {g.detector_cols}),"
            f" volume={g.volume_shape}, kernel={self.kernel.value!r},"
            f" supersample={self.supersample})"
        )

    @property
    def volume_shape(self):
        return self.geometry.volume_shape

    @property
    def sinogram_shape(self):
        return self.geometry.sinogram_shape

    @property
    def n_measurements(self) -> int:
        return int(np.prod(self.sinogram_shape))

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.volume_shape))

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """The in-plane matrix, shape ``(views * cols, ny * nx)``."""
        g = self.geometry
        rows, cols, vals = joseph_triplets(
            np.deg2rad(g.angles),
            g.detector_cols,
            g.pixel_pitch,
            g.nx,
            g.ny,
            g.voxel_pitch,
            self.supersample,
        )
        keep = rows >= 0
        A = sp.coo_matrix(
            (vals[keep], (rows[keep], cols[keep])),
            shape=(g.n_views * g.detector_cols, g.ny * g.nx),
        ).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        logger.debug(f"Built {self!r} with {A.nnz} nonzeros.")
        return A

    @cached_property
    def matrix_t(self) -> sp.csr_matrix:
        """The transpose of :attr:`matrix` in CSR form."""
        At = self.matrix.T.tocsr()
        At.sort_indices()
        return At

    @cached_property
    def axial(self) -> Optional[sp.csr_matrix]:
        """Row-from-slab interpolation, shape ``(rows, nz)``, or None for identity."""
        g = self.geometry
        if g.detector_rows == g.nz and g.pixel_pitch == g.voxel_pitch:
            return None
        return interpolation_matrix(
            g.detector_rows, g.pixel_pitch, g.nz, g.voxel_pitch
        )

    def _check_volume(self, volume: np.ndarray) -> np.ndarray:
        volume = np.asarray(volume, dtype=np.float64)
        if volume.shape != self.volume_shape:
            raise ValueError(
                f"Volume shape {volume.shape} does not match the model's"
                f" (nz, ny, nx) = {self.volume_shape}."
            )
        return volume

    def _check_sinogram(self, sino: np.ndarray) -> np.ndarray:
        sino = np.asarray(sino, dtype=np.float64)
        if sino.shape != self.sinogram_shape:
            raise ValueError(
                f"Sinogram shape {sino.shape} does not match the model's"
                f" (views, rows, cols) = {self.sinogram_shape}."
            )
        return sino

    def _project_rays(self, A: sp.csr_matrix, slabs: np.ndarray) -> np.ndarray:
        out = np.empty((A.shape[0], slabs.shape[1]), dtype=np.float64)
        return csr_matmat(A.indptr, A.indices, A.data, slabs, out)

    def forward(self, volume: np.ndarray) -> np.ndarray:
        """Line integrals of ``volume`` (1/um) along every ray.

        Args:
            volume: Array of shape ``(nz, ny, nx)``.

        Returns:
            Dimensionless projections of shape ``(views, rows, cols)``.
        """
        g = self.geometry
        volume = self._check_volume(volume)
        slabs = np.ascontiguousarray(volume.reshape(g.nz, -1).T)
        rays = self._project_rays(self.matrix, slabs)
        if self.axial is not None:
            rays = (self.axial @ rays.T).T
        rays = rays.reshape(g.n_views, g.detector_cols, g.detector_rows)
        return np.ascontiguousarray(rays.transpose(0, 2, 1))

    def forward_view(self, volume: np.ndarray, view: int) -> np.ndarray:
        """Projection of ``volume`` at a single view index, shape ``(rows, cols)``."""
        g = self.geometry
        if not 0 <= view < g.n_views:
            raise IndexError(f"View index {view} out of range [0, {g.n_views}).")
        volume = self._check_volume(volume)
        slabs = np.ascontiguousarray(volume.reshape(g.nz, -1).T)
        A = self.matrix
        start = view * g.detector_cols
        indptr = A.indptr[start : start + g.detector_cols + 1]
        out = np.empty((g.detector_cols, g.nz), dtype=np.float64)
        rays = csr_matmat(indptr, A.indices, A.data, slabs, out)
        if self.axial is not None:
            return np.asarray(self.axial @ rays.T)
        return np.ascontiguousarray(rays.T)

    def back(self, sino: np.ndarray) -> np.ndarray:
        """The adjoint :math:`A^T` applied to ``sino``.

        Args:
            sino: Array of shape ``(views, rows, cols)``.

        Returns:
            A volume of shape ``(nz, ny, nx)``.
        """
        g = self.geometry
        sino = self._check_sinogram(sino)
        rays = sino.transpose(0, 2, 1).reshape(g.n_views * g.detector_cols, -1)
        if self.axial is not None:
            rays = (self.axial.T @ rays.T).T
        rays = np.ascontiguousarray(rays)
        voxels = self._project_rays(self.matrix_t, rays)
        return np.ascontiguousarray(voxels.T).reshape(g.volume_shape)


def forward_project(volume: np.ndarray, model: SystemModel) -> np.ndarray:
    """Forward projects a ``(nz, ny, nx)`` volume to a ``(view, row, col)`` sinogram."""
    return model.forward(volume)


def back_project(sino: np.ndarray, model: SystemModel) -> np.ndarray:
    """Back projects a ``(view, row, col)`` sinogram with the exact adjoint."""
    return model.back(sino)
