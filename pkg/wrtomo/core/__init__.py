from .container import (
    ArraySpec,
    ContainerFormatError,
    ContainerWriter,
    Manifest,
    array_spec,
    load_container,
    load_manifest,
    load_sidecar,
    save_container,
)
from .types import (
    COUNT_FLOOR,
    BraggMapStack,
    CrystalSignature,
    HyperSinogram,
    HyperVolume,
    LabelVolume,
    SinogramKind,
    ViewGeometry,
    WavelengthGrid,
    as_channel,
    counts_to_projection,
    projection_to_counts,
)
