"""granulab: synthetic settled-particle datasets and PSD estimator benchmarks."""

from .baseline import Calibration, GranulometryEstimator, PatternSpectrum, estimate_psd, granulometry, segment_foreground
from .errors import GranulabError
from .evaluation import (
    BenchReport,
    EvalReport,
    MetricSet,
    PredictionSet,
    benchmark_inference,
    compute_metrics,
    read_predictions,
    scatter_export,
    write_predictions,
)
from .physics import BodyState, SimConfig, SimResult, World, settle
from .pipeline import RunConfig, desk_preset, generate_dataset, load_manifest, paper_preset
from .psd import (
    MASS_WEIGHTED,
    NUMBER_WEIGHTED,
    ParticleRecord,
    PsdTargets,
    QuantileConvention,
    SceneMetadata,
    ValidationReport,
    compute_psd,
    parse_metadata,
    serialize_metadata,
    validate_metadata,
)
from .render import Image, RenderConfig, read_png, render, write_png
from .sampling import (
    GenerationConfig,
    SceneSpec,
    TruncNormalParams,
    sample_drop_positions,
    sample_scene_spec,
    sample_trunc_normal,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport", "BodyState", "Calibration", "EvalReport", "GenerationConfig",
    "GranulabError", "GranulometryEstimator", "Image", "MASS_WEIGHTED", "MetricSet",
    "NUMBER_WEIGHTED", "ParticleRecord", "PatternSpectrum", "PredictionSet",
    "PsdTargets", "QuantileConvention", "RenderConfig", "RunConfig", "SceneMetadata",
    "SceneSpec", "SimConfig", "SimResult", "TruncNormalParams", "ValidationReport",
    "World", "benchmark_inference", "compute_metrics", "compute_psd", "desk_preset",
    "estimate_psd", "generate_dataset", "granulometry", "load_manifest",
    "paper_preset", "parse_metadata", "read_png", "read_predictions", "render",
    "sample_drop_positions", "sample_scene_spec", "sample_trunc_normal",
    "scatter_export", "segment_foreground", "serialize_metadata", "settle",
    "validate_metadata", "write_png", "write_predictions",
]
