"""Progressive-illusion vector sketches via joint multi-branch stroke optimization.

A shared set of cubic Bezier strokes is optimized so that each cumulative
prefix of the drawing order matches its own semantic target, while a
blurred-overlap penalty keeps each phase's new strokes spatially
complementary to what is already on the page.
"""

from .geometry import (
    CubicBezier,
    PhasePlan,
    StrokeSet,
    StrokeSubset,
    cumulative_subset,
    delta_subset,
    eval_bezier,
)
from .guidance import (
    GuidanceRequest,
    GuidanceResponse,
    ProtocolError,
    RemoteProvider,
    TargetMatchProvider,
    TransportError,
    target_match_gradient,
)
from .losses import OverlayConfig, overlay_loss, total_loss
from .optimize import (
    AdamState,
    OptimizeConfig,
    RunTrace,
    adam_step,
    init_strokes,
    optimize,
    save_trace,
)
from .ranking import (
    CandidateRejected,
    CandidateScores,
    MetricTriple,
    SimilarityMatrix,
    filter_candidates,
    rank_components,
    rank_score,
    semantic_concealment,
    structural_concealment,
)
from .raster import (
    RenderConfig,
    blur_vjp,
    gaussian_blur,
    render,
    render_vjp,
    save_png,
)
from .svg import SvgStyle, export_svg, parse_svg_strokes

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "CandidateRejected",
    "CandidateScores",
    "CubicBezier",
    "GuidanceRequest",
    "GuidanceResponse",
    "MetricTriple",
    "OptimizeConfig",
    "OverlayConfig",
    "PhasePlan",
    "ProtocolError",
    "RemoteProvider",
    "RenderConfig",
    "RunTrace",
    "SimilarityMatrix",
    "StrokeSet",
    "StrokeSubset",
    "SvgStyle",
    "TargetMatchProvider",
    "TransportError",
    "adam_step",
    "blur_vjp",
    "cumulative_subset",
    "delta_subset",
    "eval_bezier",
    "export_svg",
    "filter_candidates",
    "gaussian_blur",
    "init_strokes",
    "optimize",
    "overlay_loss",
    "parse_svg_strokes",
    "rank_components",
    "rank_score",
    "render",
    "render_vjp",
    "save_png",
    "save_trace",
    "semantic_concealment",
    "structural_concealment",
    "target_match_gradient",
    "total_loss",
]
