"""Tree-splitting contention resolution: engines, analytics, traffic runs.

The package simulates splitting-tree random access protocols (BTA, MTA,
SICTA, ATIC, ATIC_LEFT) over an idealized collision channel, computes
the matching expected-length and throughput laws analytically, and runs
Poisson-traffic experiments under gated or windowed channel access.
"""

from .signals import (
    NULL_SIGNAL,
    NotContainedError,
    Signal,
    SlotOutcome,
    cancel,
    classify,
    superpose,
)
from .rng import CoinSource, coin_uniform, derive_seed, scripted_coins, stream_seed
from .analytics import (
    CollisionCountTable,
    CriLengthTable,
    PrecisionLossError,
    SplitParams,
    WindowedScan,
    asymptotic_throughput,
    conditional_throughput,
    cri_table_rows,
    expected_collisions,
    expected_cri_closed,
    expected_cri_recursive,
    poisson_expected_cri,
    scan_windowed_mst,
    windowed_stable_rate,
)
from .engines import (
    RULES,
    ApState,
    CriTrace,
    EngineInvariantError,
    FeedbackMsg,
    NonTerminationError,
    ProtocolKind,
    Rules,
    SlotRecord,
    TreeNode,
    UserAction,
    UserState,
    ap_sic_step,
    arbitrate,
    build_feedback,
    export_tree,
    run_cri,
    trace_jsonl,
    user_react,
)
from .sim import (
    CollisionCdf,
    DelayStats,
    EmptySampleError,
    FeedbackCostStats,
    Gated,
    MetricsReport,
    ProtocolError,
    Windowed,
    collisions_per_cri_cdf,
    delay_stats,
    feedback_cost,
    feedback_value_histogram,
    simulate,
    throughput_estimate,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_grid
from .reports import IoError, config_digest, emit_report, render_csv, render_json

__version__ = "0.1.0"

__all__ = [
    "NULL_SIGNAL", "NotContainedError", "Signal", "SlotOutcome",
    "cancel", "classify", "superpose",
    "CoinSource", "coin_uniform", "derive_seed", "scripted_coins", "stream_seed",
    "CollisionCountTable", "CriLengthTable", "PrecisionLossError", "SplitParams",
    "WindowedScan", "asymptotic_throughput", "conditional_throughput",
    "cri_table_rows", "expected_collisions", "expected_cri_closed",
    "expected_cri_recursive", "poisson_expected_cri", "scan_windowed_mst",
    "windowed_stable_rate",
    "RULES", "ApState", "CriTrace", "EngineInvariantError", "FeedbackMsg",
    "NonTerminationError", "ProtocolKind", "Rules", "SlotRecord", "TreeNode",
    "UserAction", "UserState", "ap_sic_step", "arbitrate", "build_feedback",
    "export_tree", "run_cri", "trace_jsonl", "user_react",
    "CollisionCdf", "DelayStats", "EmptySampleError", "FeedbackCostStats",
    "Gated", "MetricsReport", "ProtocolError", "Windowed",
    "collisions_per_cri_cdf", "delay_stats", "feedback_cost",
    "feedback_value_histogram", "simulate", "throughput_estimate",
    "ConfigError", "ExperimentConfig", "load_config", "parse_grid",
    "IoError", "config_digest", "emit_report", "render_csv", "render_json",
    "__version__",
]
