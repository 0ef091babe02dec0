import matplotlib.pyplot as plt
import numpy as np
import pytest

from wrtomo import plotting


@pytest.fixture(scope="module")
def volumes():
    rng = np.random.default_rng(0)
    truth = np.full((3, 2, 8, 8), 1e-4)
    return truth, {"FBP": truth + 1e-5 * rng.normal(size=truth.shape), "R-MBIR": truth}


@pytest.mark.parametrize("wavelengths", [None, [2.5, 3.0, 3.5]])
@pytest.mark.parametrize("z", [None, 0])
def test_plot_cross_sections(volumes, wavelengths, z):
    truth, recons = volumes
    with plotting.non_gui_backend():
        fig, axes = plotting.plot_cross_sections(
            truth, recons, 1, z=z, wavelengths=wavelengths
        )
        assert isinstance(fig, plt.Figure)
        assert len(axes) == 3
        assert "NRMSE = 0.000" in axes[2].get_title()
        plt.close(fig)


@pytest.mark.parametrize("with_truth", [False, True])
def test_plot_bragg_maps(with_truth):
    bragg = np.zeros((2, 4, 3, 5), dtype=np.uint8)
    bragg[1, 2, 1, 1:3] = 1
    with plotting.non_gui_backend():
        fig, axes = plotting.plot_bragg_maps(
            bragg, 1, 2, truth=bragg if with_truth else None
        )
        assert len(axes) == 1 + with_truth
        plt.close(fig)


@pytest.mark.parametrize("with_truth", [False, True])
def test_plot_signatures(with_truth):
    signatures = np.zeros((2, 6, 4), dtype=np.uint8)
    signatures[0, 1, 2] = 1
    angles = np.linspace(0, 180, 6, endpoint=False)
    with plotting.non_gui_backend():
        fig, axes = plotting.plot_signatures(
            signatures,
            angles,
            [2.5, 3.0, 3.5, 4.0],
            truth=signatures if with_truth else None,
            titles=["A", "B"],
        )
        assert axes.shape == (1 + with_truth, 2)
        assert axes[0, 1].get_title() == "B"
        plt.close(fig)


def test_plot_spectra():
    profiles = {"crystal_truth": [1.0, 2.0], "crystal_recon": [1.1, 1.9]}
    with plotting.non_gui_backend():
        fig, ax = plotting.plot_spectra(profiles, [2.5, 3.0])
        assert len(ax.get_lines()) == 2
        plt.close(fig)
