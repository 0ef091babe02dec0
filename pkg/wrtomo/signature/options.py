from dataclasses import dataclass
from typing import Optional


class SignatureParamsError(ValueError):
    pass


@dataclass
class SignatureParams:
    """Options for segmenting domains and matching them to Bragg anomalies.

    Args:
        n_classes: Number of k-means classes of the reconstructed spectra.
        foreground_class: The class whose connected components are domains.
            Defaults to the class with the largest centroid norm.
        connectivity: 3D connectivity, 1 (faces) to 3 (26-neighborhood).
        min_voxels: Domains with fewer voxels are dropped.
        min_area: Anomalies with fewer pixels are dropped.
        binarize_frac: A projected domain covers a pixel when its path length
            exceeds this fraction of the voxel pitch.
        score_threshold: Minimum correlation score of an accepted match.
        seed: Seed of the k-means initialization.
    """

    n_classes: int = 3
    foreground_class: Optional[int] = None
    connectivity: int = 3
    min_voxels: int = 8
    min_area: int = 4
    binarize_frac: float = 0.5
    score_threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if int(self.n_classes) != self.n_classes or self.n_classes < 2:
            raise SignatureParamsError(
                f"n_classes must be an integer >= 2 (got {self.n_classes})."
            )
        if self.foreground_class is not None and not (
            0 <= self.foreground_class < self.n_classes
        ):
            raise SignatureParamsError(
                f"foreground_class must be in [0, {self.n_classes})"
                f" (got {self.foreground_class})."
            )
        if self.connectivity not in (1, 2, 3):
            raise SignatureParamsError(
                f"connectivity must be 1, 2, or 3 (got {self.connectivity})."
            )
        if self.min_voxels < 1 or self.min_area < 1:
            raise SignatureParamsError(
                "min_voxels and min_area must be >= 1"
                f" (got {self.min_voxels}, {self.min_area})."
            )
        if not 0 < self.binarize_frac:
            raise SignatureParamsError(
                f"binarize_frac must be > 0 (got {self.binarize_frac})."
            )
        if not 0 < self.score_threshold < 1:
            raise SignatureParamsError(
                f"score_threshold must be in (0, 1) (got {self.score_threshold})."
            )

    @property
    def foreground(self) -> int:
        if self.foreground_class is None:
            return self.n_classes - 1
        return self.foreground_class
