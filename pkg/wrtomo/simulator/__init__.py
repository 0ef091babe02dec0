from .material import (
    Material,
    MaterialKind,
    ReflectionTrace,
    attenuation,
    bragg_wavelength,
    crystal_material,
    default_traces,
    powder_material,
)
from .measure import SimulationResult, poisson_counts, simulate_measurements
from .phantom import (
    GrainPhantom,
    PhantomParams,
    PhantomParamsError,
    cylinder_mask,
    generate_phantom,
    grains_by_size,
)
