from .fbp import FilterKind, fbp_reconstruct, filter_projections, ramp_filter
from .system import (
    ProjectorKernel,
    SystemModel,
    back_project,
    forward_project,
    interpolation_matrix,
)
