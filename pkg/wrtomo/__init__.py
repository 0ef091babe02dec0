from .about import version_dict, version_table
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .core import (
    BraggMapStack,
    CrystalSignature,
    HyperSinogram,
    HyperVolume,
    LabelVolume,
    Manifest,
    SinogramKind,
    ViewGeometry,
    WavelengthGrid,
    counts_to_projection,
    load_container,
    projection_to_counts,
    save_container,
)
from .metrics import EvalReport, binary_rates, evaluate, nrmse
from .plotting import (
    non_gui_backend,
    plot_bragg_maps,
    plot_cross_sections,
    plot_signatures,
    plot_spectra,
)
from .projector import SystemModel, back_project, fbp_reconstruct, forward_project
from .rmbir import RmbirParams, reconstruct_all, rmbir_reconstruct
from .signature import SignatureParams, extract_signatures
from .simulator import generate_phantom, simulate_measurements
from .units import ureg
from .version import __git_revision__, __version__
