"""LLM-in-the-loop optimization search for tile-based splatting kernels.

The package splits into a deterministic half (program model, reference
blender, profile arithmetic, cost model) and a stochastic-looking half
(planner, generator, checker backends) that is itself deterministic when the
mock backends are used. See the README for the command line surface.
"""

from .catalog import DEFAULT_CATALOG, TransformCatalog, TransformCatalogEntry
from .checker import CrossCheckMatrix, EquivalenceVerdict, check, check_benefit
from .config import RunConfig, load_run_config
from .errors import BackendError, ConfigError, InputError, SplatoptError
from .evaluator import (
    CostModelBackend,
    EvaluationResult,
    FailureKind,
    SubprocessBackend,
    combined_score,
    evaluate,
)
from .gateway import BackendConfig, Exchange, Gateway, MockProfile
from .oracle import RenderOutput, Scene, Splat, generate_scene, render, workload_stats
from .planner import Plan, PrunedPlan, parse_advice, parse_pruned
from .profiles import (
    GpuShape,
    OccupancyAnalysis,
    SystemProfile,
    classify_roofline,
    compute_waves,
    dominant_stall,
    summarize_profile,
)
from .program import (
    EvolveBlock,
    Modification,
    ModificationSequence,
    SourceProgram,
    apply_modification,
    apply_sequence,
    diff_outside_blocks,
    extract_blocks,
    read_program,
    write_program,
)
from .search import (
    IterationRecord,
    ProfileBundle,
    SearchConfig,
    SearchReport,
    run_search,
    run_search_full,
)

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "BackendError",
    "ConfigError",
    "CostModelBackend",
    "CrossCheckMatrix",
    "DEFAULT_CATALOG",
    "EquivalenceVerdict",
    "EvaluationResult",
    "EvolveBlock",
    "Exchange",
    "FailureKind",
    "Gateway",
    "GpuShape",
    "InputError",
    "IterationRecord",
    "MockProfile",
    "Modification",
    "ModificationSequence",
    "OccupancyAnalysis",
    "Plan",
    "ProfileBundle",
    "PrunedPlan",
    "RenderOutput",
    "RunConfig",
    "Scene",
    "SearchConfig",
    "SearchReport",
    "SourceProgram",
    "Splat",
    "SplatoptError",
    "SubprocessBackend",
    "SystemProfile",
    "TransformCatalog",
    "TransformCatalogEntry",
    "apply_modification",
    "apply_sequence",
    "check",
    "check_benefit",
    "classify_roofline",
    "combined_score",
    "compute_waves",
    "diff_outside_blocks",
    "dominant_stall",
    "evaluate",
    "extract_blocks",
    "generate_scene",
    "load_run_config",
    "parse_advice",
    "parse_pruned",
    "read_program",
    "render",
    "run_search",
    "run_search_full",
    "summarize_profile",
    "workload_stats",
    "write_program",
]
