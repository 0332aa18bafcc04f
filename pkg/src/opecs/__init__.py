"""Anytime-valid confidence sequences for off-policy evaluation of
contextual-bandit policies from logged importance-weighted data."""

from .baselines import (
    GridCS,
    HindsightCS,
    el_asymptotic_ci,
    ftl_exact_bet,
    grid_cs,
)
from .core import (
    PSI,
    Bet,
    Config,
    FeasibleRegion,
    Interval,
    LogSample,
    fan_lower,
    largest_root_at_threshold,
    log1p_quad_lower,
    region,
)
from .engines import (
    DoublyHedgedCS,
    ScalarCS,
    TwoSidedCS,
    VectorProcess,
    ci_from_permutations,
    control_variate,
    exact_log_wealth,
    first_decision,
    mirror_sample,
    running_intersection,
    scalar_bet,
)
from .environments import (
    InfeasibleMoments,
    MaxEntDistribution,
    MaxEntSpec,
    env_suite,
    maxent_fit,
    sample_stream,
    synth_env,
)
from .experiments import (
    ConfigError,
    DataError,
    ExperimentConfig,
    Report,
    TraceRow,
    emit_trace,
    ingest_jsonl,
    load_config,
    read_trace,
    run_experiment,
)
from .qp import QuadObjective, argmax_quadratic

__version__ = "0.1.0"

__all__ = [
    "PSI",
    "Bet",
    "Config",
    "ConfigError",
    "DataError",
    "DoublyHedgedCS",
    "ExperimentConfig",
    "FeasibleRegion",
    "GridCS",
    "HindsightCS",
    "InfeasibleMoments",
    "Interval",
    "LogSample",
    "MaxEntDistribution",
    "MaxEntSpec",
    "QuadObjective",
    "Report",
    "ScalarCS",
    "TraceRow",
    "TwoSidedCS",
    "VectorProcess",
    "argmax_quadratic",
    "ci_from_permutations",
    "control_variate",
    "el_asymptotic_ci",
    "emit_trace",
    "env_suite",
    "exact_log_wealth",
    "fan_lower",
    "first_decision",
    "ftl_exact_bet",
    "grid_cs",
    "ingest_jsonl",
    "largest_root_at_threshold",
    "load_config",
    "log1p_quad_lower",
    "maxent_fit",
    "mirror_sample",
    "read_trace",
    "region",
    "run_experiment",
    "running_intersection",
    "sample_stream",
    "scalar_bet",
    "synth_env",
]
