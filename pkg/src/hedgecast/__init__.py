"""Memory-hedged online correction of base forecasts.

A pool of exponentially weighted least-squares correctors, one per memory
scale on a geometric grid, is combined per step by a gradient-based
aggregation rule with nonnegative-regret weighting. The package adds the
evaluation, diagnostic, and paired block-bootstrap machinery needed to report
results on regime-structured data, plus a CLI that renders figures next to
the delimited outputs.
"""

from .aggregation import MlpolState, aggregate, observe
from .bootstrap import BootstrapConfig, BootstrapReport, paired_bootstrap
from .engine import Observation, RunRecord, RunResult, run_stream, run_variant
from .errors import (
    ConfigurationError,
    DiagnosticError,
    HedgecastError,
    IngestionError,
    NumericalFailureError,
    OutOfRangeError,
    ReportingError,
)
from .evaluation import (
    EvalReport,
    RegimeSpec,
    build_eval_report,
    hindsight_static_convex,
    rmse_by_regime,
    weight_buckets,
)
from .experts import EwlsConfig, EwlsState, batch_ewls
from .pool import ExpertPool, GridSpec, PoolConfig
from .runner import RunConfig, gamma_sweep, load_run_config, run_experiment
from .synthetic import (
    ScenarioSpec,
    SegmentSpec,
    generate,
    level_shift_scenario,
    two_phase_drift_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "MlpolState",
    "aggregate",
    "observe",
    "BootstrapConfig",
    "BootstrapReport",
    "paired_bootstrap",
    "Observation",
    "RunRecord",
    "RunResult",
    "run_stream",
    "run_variant",
    "HedgecastError",
    "ConfigurationError",
    "IngestionError",
    "NumericalFailureError",
    "ReportingError",
    "DiagnosticError",
    "OutOfRangeError",
    "EvalReport",
    "RegimeSpec",
    "build_eval_report",
    "hindsight_static_convex",
    "rmse_by_regime",
    "weight_buckets",
    "EwlsConfig",
    "EwlsState",
    "batch_ewls",
    "ExpertPool",
    "GridSpec",
    "PoolConfig",
    "RunConfig",
    "gamma_sweep",
    "load_run_config",
    "run_experiment",
    "ScenarioSpec",
    "SegmentSpec",
    "generate",
    "level_shift_scenario",
    "two_phase_drift_scenario",
]
