import numba
import numpy as np


@numba.njit(parallel=True)
def joseph_triplets(
    angles: np.ndarray,
    n_cols: int,
    pixel_pitch: float,
    nx: int,
    ny: int,
    voxel_pitch: float,
    supersample: int,
):
    """COO triplets of the in-plane Joseph system matrix.

    Each ray is stepped through the voxel planes perpendicular to its major
    axis, and at each plane the volume is sampled by linear interpolation
    between the two nearest voxel centers. The sample is weighted by the ray
    length per plane, ``voxel_pitch / |cos|``. Every view writes to its own
    block of the output, and unused slots keep ``row = -1``.

    Args:
        angles: View angles in radians.
        n_cols: Number of detector columns.
        pixel_pitch: Detector pixel size.
        nx: Number of voxels along x.
        ny: Number of voxels along y.
        voxel_pitch: Voxel size.
        supersample: Number of rays per detector column.

    Returns:
        ``(rows, cols, vals)`` where rows index ``view * n_cols + col`` and
        cols index ``y * nx + x``.
    """
    n_views = angles.shape[0]
    n_planes = max(nx, ny)
    per_ray = 2 * n_planes
    per_view = n_cols * supersample * per_ray
    rows = np.full(n_views * per_view, -1, dtype=np.int64)
    cols = np.zeros(n_views * per_view, dtype=np.int64)
    vals = np.zeros(n_views * per_view, dtype=np.float64)
    x_center = 0.5 * (nx - 1)
    y_center = 0.5 * (ny - 1)
    col_center = 0.5 * (n_cols - 1)
    for v in numba.prange(n_views):
        cos_phi = np.cos(angles[v])
        sin_phi = np.sin(angles[v])
        dx = -sin_phi
        dy = cos_phi
        for col in range(n_cols):
            ray = v * n_cols + col
            for sub in range(supersample):
                offset = (sub + 0.5) / supersample - 0.5
                u = (col - col_center + offset) * pixel_pitch
                k = v * per_view + (col * supersample + sub) * per_ray
                if abs(dy) >= abs(dx) - 1e-12:
                    step = voxel_pitch / abs(dy) / supersample
                    for j in range(ny):
                        y = (j - y_center) * voxel_pitch
                        t = (y - u * sin_phi) / dy
                        fi = (u * cos_phi + t * dx) / voxel_pitch + x_center
                        i0 = int(np.floor(fi))
                        w1 = fi - i0
                        if 0 <= i0 < nx and w1 < 1.0:
                            rows[k] = ray
                            cols[k] = j * nx + i0
                            vals[k] = step * (1.0 - w1)
                        if 0 <= i0 + 1 < nx and w1 > 0.0:
                            rows[k + 1] = ray
                            cols[k + 1] = j * nx + i0 + 1
                            vals[k + 1] = step * w1
                        k += 2
                else:
                    step = voxel_pitch / abs(dx) / supersample
                    for i in range(nx):
                        x = (i - x_center) * voxel_pitch
                        t = (x - u * cos_phi) / dx
                        fj = (u * sin_phi + t * dy) / voxel_pitch + y_center
                        j0 = int(np.floor(fj))
                        w1 = fj - j0
                        if 0 <= j0 < ny and w1 < 1.0:
                            rows[k] = ray
                            cols[k] = j0 * nx + i
                            vals[k] = step * (1.0 - w1)
                        if 0 <= j0 + 1 < ny and w1 > 0.0:
                            rows[k + 1] = ray
                            cols[k + 1] = (j0 + 1) * nx + i
                            vals[k + 1] = step * w1
                        k += 2
    return rows, cols, vals


@numba.njit(parallel=True)
def csr_matmat(
    indptr: np.ndarray,
    indices: np.ndarray,
    data: np.ndarray,
    X: np.ndarray,
    out: np.ndarray,
):
    """``out[i] = sum_k data[k] * X[indices[k]]`` over the CSR row ``i``.

    Rows are independent and each is accumulated in a fixed order, so the
    result does not depend on the number of threads. ``indptr`` may be a
    window into a larger matrix: its entries index ``indices`` and ``data``
    directly.
    """
    n_rows = indptr.shape[0] - 1
    n_rhs = X.shape[1]
    for i in numba.prange(n_rows):
        for m in range(n_rhs):
            out[i, m] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            a = data[k]
            j = indices[k]
            for m in range(n_rhs):
                out[i, m] += a * X[j, m]
    return out


@numba.njit(parallel=True)
def pixel_driven_backproject(
    q: np.ndarray,
    angles: np.ndarray,
    pixel_pitch: float,
    voxel_pitch: float,
    nx: int,
    ny: int,
):
    """Sum over views of ``q`` linearly interpolated at each voxel center.

    Args:
        q: Filtered projections, shape ``(n_views, nz, n_cols)``, already
            resampled to the volume slabs.
        angles: View angles in radians.
        pixel_pitch: Detector pixel size.
        voxel_pitch: Voxel size.
        nx: Number of voxels along x.
        ny: Number of voxels along y.

    Returns:
        A volume of shape ``(nz, ny, nx)``. Each slab is written by one thread.
    """
    n_views, nz, n_cols = q.shape
    out = np.zeros((nz, ny, nx), dtype=np.float64)
    cos_phi = np.cos(angles)
    sin_phi = np.sin(angles)
    col_center = 0.5 * (n_cols - 1)
    for z in numba.prange(nz):
        for j in range(ny):
            y = (j - 0.5 * (ny - 1)) * voxel_pitch
            for i in range(nx):
                x = (i - 0.5 * (nx - 1)) * voxel_pitch
                total = 0.0
                for v in range(n_views):
                    fc = (x * cos_phi[v] + y * sin_phi[v]) / pixel_pitch + col_center
                    c0 = int(np.floor(fc))
                    w1 = fc - c0
                    if 0 <= c0 < n_cols:
                        total += (1.0 - w1) * q[v, z, c0]
                    if 0 <= c0 + 1 < n_cols:
                        total += w1 * q[v, z, c0 + 1]
                out[z, j, i] = total
    return out
