from enum import Enum
from typing import Union

import numpy as np
from scipy import fft

from ..core.types import HyperSinogram, as_channel
from .kernels import pixel_driven_backproject
from .system import SystemModel, interpolation_matrix


class FilterKind(Enum):
    """Apodization applied to the ramp filter."""

    RAMLAK: str = "ramlak"
    HAMMING: str = "hamming"


def padded_length(n_cols: int) -> int:
    """The next power of two that is at least ``2 * n_cols``."""
    return 1 << int(np.ceil(np.log2(2 * n_cols)))


def ramp_filter(n_cols: int, kind: Union[FilterKind, str] = FilterKind.RAMLAK):
    """Frequency response of the band-limited ramp filter, in units of one sample.

    The filter is the FFT of the sampled spatial ramp kernel
    :math:`h[0] = 1/4`, :math:`h[n] = -1/(\\pi n)^2` for odd :math:`n`, which
    avoids the DC offset of sampling :math:`|\\omega|` directly.

    Returns:
        A real array of length :func:`padded_length`.
    """
    kind = FilterKind(kind)
    size = padded_length(n_cols)
    n = np.concatenate(
        [np.arange(1, size // 2 + 1, 2), np.arange(size // 2 - 1, 0, -2)]
    )
    h = np.zeros(size)
    h[0] = 0.25
    h[1::2] = -1 / (np.pi * n) ** 2
    response = np.real(fft.fft(h))
    if kind is FilterKind.HAMMING:
        response *= 0.54 + 0.46 * np.cos(2 * np.pi * fft.fftfreq(size))
    return response


def filter_projections(
    sino: np.ndarray,
    pixel_pitch: float,
    kind: Union[FilterKind, str] = FilterKind.RAMLAK,
) -> np.ndarray:
    """Ramp-filters each detector row of ``sino`` along the column axis.

    Returns:
        Filtered projections in 1/um, same shape as ``sino``.
    """
    n_cols = sino.shape[-1]
    response = ramp_filter(n_cols, kind)
    spectrum = fft.fft(sino, n=response.size, axis=-1)
    filtered = np.real(fft.ifft(spectrum * response, axis=-1))[..., :n_cols]
    return filtered / pixel_pitch


def fbp_reconstruct(
    sino: Union[np.ndarray, HyperSinogram],
    model: SystemModel,
    filter: Union[FilterKind, str] = FilterKind.RAMLAK,
    channel: int = 0,
) -> np.ndarray:
    """Filtered back projection of one projection channel.

    Args:
        sino: Projections ``(view, row, col)``, or a projection
            :class:`HyperSinogram` from which ``channel`` is taken.
        model: The system model describing the geometry.
        filter: ``"ramlak"`` or ``"hamming"``.
        channel: Wavelength channel to use when ``sino`` is a HyperSinogram.

    Returns:
        The attenuation volume ``(nz, ny, nx)`` in 1/um.
    """
    g = model.geometry
    sino = as_channel(sino, channel)
    if sino.shape != model.sinogram_shape:
        raise ValueError(
            f"Sinogram shape {sino.shape} does not match the model's"
            f" {model.sinogram_shape}."
        )
    if g.n_views < 2:
        raise ValueError(f"FBP needs at least 2 views (got {g.n_views}).")
    filtered = filter_projections(sino, g.pixel_pitch, filter)
    if model.axial is not None:
        to_slabs = interpolation_matrix(
            g.nz, g.voxel_pitch, g.detector_rows, g.pixel_pitch
        )
        filtered = np.stack([to_slabs @ view for view in filtered])
    volume = pixel_driven_backproject(
        np.ascontiguousarray(filtered),
        np.deg2rad(g.angles),
        g.pixel_pitch,
        g.voxel_pitch,
        g.nx,
        g.ny,
    )
    return volume * (np.pi / g.n_views)
