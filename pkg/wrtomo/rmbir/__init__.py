from .options import InitKind, RmbirParams, RmbirParamsError
from .penalty import (
    QGGMRF,
    neighborhood,
    surrogate_constant,
    surrogate_weight,
    talwar,
)
from .solve import (
    ChannelError,
    ReconstructionResult,
    RmbirDivergenceError,
    RmbirResult,
    SurrogateObjective,
    WeightMatrix,
    cost,
    estimate_weights,
    inpaint_rows,
    normalized_residuals,
    ogm,
    power_iteration,
    reconstruct_all,
    rmbir_reconstruct,
    select_threshold,
)
