from .match import (
    MatchRecord,
    MatchResult,
    SignatureResult,
    correlation_score,
    extract_signatures,
    match_signatures,
    project_and_binarize,
)
from .options import SignatureParams, SignatureParamsError
from .segment import (
    AnomalyComponent,
    connected_components_2d,
    connected_components_3d,
    kmeans_segment,
)
