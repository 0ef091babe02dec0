import warnings
from contextlib import contextmanager
from typing import Dict, Optional, Sequence, Tuple

import matplotlib as mpl
import matplotlib.pyplot as plt
import numpy as np

from .metrics import nrmse


@contextmanager
def non_gui_backend():
    """A contextmanager that temporarily uses a non-GUI backend for matplotlib."""
    with warnings.catch_warnings():
        for msg in (
            "Matplotlib is currently using agg",
            "FigureCanvasAgg is non-interactive",
        ):
            warnings.filterwarnings("ignore", category=UserWarning, message=msg)
        old_backend = mpl.get_backend()
        try:
            mpl.use("Agg")
            yield
        finally:
            mpl.use(old_backend)


def plot_cross_sections(
    truth: np.ndarray,
    reconstructions: Dict[str, np.ndarray],
    k: int,
    z: Optional[int] = None,
    wavelengths: Optional[Sequence[float]] = None,
    cmap: str = "viridis",
    **figure_kwargs,
) -> Tuple[plt.Figure, np.ndarray]:
    """Side-by-side axial slices of the truth and each reconstruction.

    Args:
        truth: Attenuation ``(k, z, y, x)`` in 1/um.
        reconstructions: Reconstructions keyed by method name.
        k: Wavelength index.
        z: Slice index. Defaults to the middle slice.
        wavelengths: Wavelengths in Angstrom, used in the title.
        cmap: Colormap name.

    Returns:
        The figure and its axes.
    """
    if z is None:
        z = truth.shape[1] // 2
    figure_kwargs.setdefault("figsize", (3.2 * (1 + len(reconstructions)), 3.4))
    fig, axes = plt.subplots(
        1, 1 + len(reconstructions), squeeze=False, constrained_layout=True,
        **figure_kwargs,
    )
    axes = axes[0]
    vmin, vmax = 0, float(np.max(truth[k]))
    panels = [("Truth", truth[k][z], None)]
    for name, volume in reconstructions.items():
        panels.append((name, volume[k][z], nrmse(volume[k], truth[k])))
    for ax, (name, image, error) in zip(axes, panels):
        im = ax.imshow(image, cmap=cmap, vmin=vmin, vmax=vmax, origin="lower")
        title = name if error is None else f"{name}\nNRMSE = {error:.3f}"
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes.tolist(), label="$\\mu$ [$\\mu$m$^{-1}$]", shrink=0.8)
    label = f"$\\lambda$ = {wavelengths[k]:.3f} Å" if wavelengths is not None else f"k = {k}"
    fig.suptitle(f"{label}, z = {z}")
    return fig, axes


def plot_bragg_maps(
    bragg: np.ndarray,
    k: int,
    view: int,
    truth: Optional[np.ndarray] = None,
    **figure_kwargs,
) -> Tuple[plt.Figure, np.ndarray]:
    """The estimated (and optionally true) Bragg map at one wavelength and view."""
    panels = [("Estimated", bragg[k, view])]
    if truth is not None:
        panels.append(("Truth", truth[k, view]))
    fig, axes = plt.subplots(
        len(panels), 1, squeeze=False, constrained_layout=True, **figure_kwargs
    )
    axes = axes[:, 0]
    for ax, (name, image) in zip(axes, panels):
        ax.imshow(image, cmap="gray_r", vmin=0, vmax=1, aspect="auto")
        ax.set_title(f"{name} Bragg map, k = {k}, view = {view}")
        ax.set_xlabel("Column")
        ax.set_ylabel("Row")
    return fig, axes


def plot_signatures(
    signatures: Sequence[np.ndarray],
    angles: Sequence[float],
    wavelengths: Sequence[float],
    truth: Optional[Sequence[np.ndarray]] = None,
    titles: Optional[Sequence[str]] = None,
    **figure_kwargs,
) -> Tuple[plt.Figure, np.ndarray]:
    """Crystal signatures as (angle, wavelength) images.

    If ``truth`` is given, it is drawn in a second row.
    """
    n = max(len(signatures), 1)
    rows = [signatures] if truth is None else [signatures, truth]
    figure_kwargs.setdefault("figsize", (3 * n, 3 * len(rows)))
    fig, axes = plt.subplots(
        len(rows), n, squeeze=False, constrained_layout=True, **figure_kwargs
    )
    extent = [wavelengths[0], wavelengths[-1], angles[-1], angles[0]]
    for r, row in enumerate(rows):
        for i, matrix in enumerate(row):
            ax = axes[r, i]
            ax.imshow(matrix, cmap="gray_r", vmin=0, vmax=1, aspect="auto", extent=extent)
            title = titles[i] if titles is not None else f"Domain {i + 1}"
            ax.set_title(title if r == 0 else f"{title} (truth)")
            ax.set_xlabel("$\\lambda$ [Å]")
            ax.set_ylabel("$\\phi$ [deg]")
    return fig, axes


def plot_spectra(
    profiles: Dict[str, Sequence[float]],
    wavelengths: Sequence[float],
    **figure_kwargs,
) -> Tuple[plt.Figure, plt.Axes]:
    """Mean attenuation spectra, one line per profile."""
    fig, ax = plt.subplots(constrained_layout=True, **figure_kwargs)
    for name, values in profiles.items():
        style = "--" if name.endswith("_truth") else "-"
        ax.plot(wavelengths, values, style, label=name.replace("_", " "))
    ax.set_xlabel("$\\lambda$ [Å]")
    ax.set_ylabel("$\\mu$ [$\\mu$m$^{-1}$]")
    ax.legend()
    return fig, ax
