"""Experiment orchestration: config -> runs -> reports -> files.

This is the layer the CLI is a thin wrapper around. ``run_experiment`` takes a
fully resolved :class:`RunConfig`, executes the requested variants over one
stream, and writes the delimited outputs (and figures) into ``outdir``. The
resolved configuration is echoed to ``resolved_config.json``; feeding that
file back reproduces the run bit for bit.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import evaluation, io
from .bootstrap import BootstrapConfig, BootstrapReport, paired_bootstrap
from .engine import Observation, RunResult, VARIANTS, run_variant
from .errors import ConfigurationError
from .evaluation import (
    RegimeSpec,
    build_eval_report,
    cumulative_regret_curve,
    hindsight_static_convex,
    residual_correlation,
    weight_buckets,
)
from .pool import PoolConfig, nominal_scales
from .synthetic import ScenarioSpec, generate

__all__ = [
    "RunConfig",
    "SweepTable",
    "run_config_to_dict",
    "run_config_from_dict",
    "load_run_config",
    "run_experiment",
    "gamma_sweep",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment run depends on.

    Exactly one of ``input_csv`` / ``scenario`` supplies the stream. Variants
    are run in the given order; the first one is the bootstrap anchor unless
    ``anchor`` overrides it.
    """

    pool: PoolConfig
    input_csv: Optional[str] = None
    scenario: Optional[ScenarioSpec] = None
    timestamp_col: str = "timestamp"
    target_col: str = "y"
    base_cols: Optional[Tuple[str, ...]] = None
    variants: Tuple[str, ...] = ("combined", "base_only")
    regimes: Tuple[RegimeSpec, ...] = ()
    bootstrap: Optional[BootstrapConfig] = None
    anchor: Optional[str] = None
    bucket_edges: Tuple[float, float] = (100.0, 1000.0)
    residual_segment_len: Optional[int] = None
    bounded_iterate: bool = False
    figures: bool = True

    def __post_init__(self) -> None:
        if (self.input_csv is None) == (self.scenario is None):
            raise ConfigurationError(
                "exactly one of input_csv/scenario must be provided"
            )
        if not self.variants:
            raise ConfigurationError("at least one variant is required")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigurationError(
                    f"unknown variant {v!r}; expected one of {VARIANTS}"
                )
        if len(set(self.variants)) != len(self.variants):
            raise ConfigurationError("variants must be distinct")
        if self.anchor is not None and self.anchor not in self.variants:
            raise ConfigurationError(
                f"anchor {self.anchor!r} is not among the requested variants"
            )
        if len(self.bucket_edges) != 2 or not (
            0.0 < self.bucket_edges[0] < self.bucket_edges[1]
        ):
            raise ConfigurationError("bucket_edges must be increasing and positive")
        if self.residual_segment_len is not None and self.residual_segment_len < 2:
            raise ConfigurationError("residual_segment_len must be at least 2")


def run_config_to_dict(config: RunConfig) -> dict:
    return {
        "pool": io.pool_config_to_dict(config.pool),
        "input_csv": config.input_csv,
        "scenario": None
        if config.scenario is None
        else io.scenario_to_dict(config.scenario),
        "timestamp_col": config.timestamp_col,
        "target_col": config.target_col,
        "base_cols": None if config.base_cols is None else list(config.base_cols),
        "variants": list(config.variants),
        "regimes": [io.regime_to_dict(r) for r in config.regimes],
        "bootstrap": None
        if config.bootstrap is None
        else io.bootstrap_config_to_dict(config.bootstrap),
        "anchor": config.anchor,
        "bucket_edges": list(config.bucket_edges),
        "residual_segment_len": config.residual_segment_len,
        "bounded_iterate": config.bounded_iterate,
        "figures": config.figures,
    }


def run_config_from_dict(d: Mapping) -> RunConfig:
    if "pool" not in d:
        raise ConfigurationError("config is missing the 'pool' section")
    base_cols = d.get("base_cols")
    return RunConfig(
        pool=io.pool_config_from_dict(d["pool"]),
        input_csv=d.get("input_csv"),
        scenario=None
        if d.get("scenario") is None
        else io.scenario_from_dict(d["scenario"]),
        timestamp_col=str(d.get("timestamp_col", "timestamp")),
        target_col=str(d.get("target_col", "y")),
        base_cols=None if base_cols is None else tuple(str(c) for c in base_cols),
        variants=tuple(str(v) for v in d.get("variants", ("combined", "base_only"))),
        regimes=tuple(io.regime_from_dict(r) for r in d.get("regimes", ())),
        bootstrap=None
        if d.get("bootstrap") is None
        else io.bootstrap_config_from_dict(d["bootstrap"]),
        anchor=d.get("anchor"),
        bucket_edges=tuple(float(e) for e in d.get("bucket_edges", (100.0, 1000.0))),
        residual_segment_len=d.get("residual_segment_len"),
        bounded_iterate=bool(d.get("bounded_iterate", False)),
        figures=bool(d.get("figures", True)),
    )


def load_run_config(path: str) -> RunConfig:
    """Load a YAML or JSON run config (the JSON echo loads via YAML too)."""
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a mapping at top level")
    return run_config_from_dict(data)


def _load_stream(config: RunConfig):
    if config.scenario is not None:
        return generate(config.scenario)
    stream = io.ingest_csv(
        config.input_csv,
        timestamp_col=config.timestamp_col,
        target_col=config.target_col,
        base_cols=config.base_cols,
    )
    return stream, None


def _resolved_echo(config: RunConfig) -> dict:
    pool = config.pool
    echo = run_config_to_dict(config)
    echo["resolved"] = {
        "gammas": list(pool.resolved_gammas()),
        "epsilons": list(pool.resolved_epsilons()),
        "nominal_scales": [
            float(h) if np.isfinite(h) else None
            for h in nominal_scales(pool.resolved_gammas())
        ],
        "coldstart_len": pool.resolved_coldstart(),
        "n_experts": pool.n_experts,
    }
    return echo


def run_experiment(config: RunConfig, outdir: str) -> Dict[str, str]:
    """Execute one experiment and write its outputs under ``outdir``.

    Returns a name -> path map of everything written.
    """
    os.makedirs(outdir, exist_ok=True)
    paths: Dict[str, str] = {}

    def _out(name: str) -> str:
        path = os.path.join(outdir, name)
        paths[name] = path
        return path

    stream, comparator_path = _load_stream(config)

    if config.scenario is not None:
        io.write_stream_csv(stream, _out("stream.csv"))
        io.write_path_csv(comparator_path, _out("comparator_path.csv"))

    results: Dict[str, RunResult] = {}
    for variant in config.variants:
        results[variant] = run_variant(stream, config.pool, variant)
        io.write_records_csv(results[variant], _out(f"records_{variant}.csv"))

    io.write_losses_csv(results, _out("losses.csv"))

    diagnostics: Dict[str, object] = {}
    if comparator_path is not None:
        diagnostics["comparator_path_length"] = evaluation.path_length(comparator_path)

    if config.residual_segment_len is not None:
        ref = results[config.variants[0]]
        m = config.pool.m_base
        base_preds = ref.expert_pred_matrix()[:, :m]
        if ref.variant == "ewls_only":
            base_preds = np.array([o.z for o in stream], dtype=float)
        corr, mean_offdiag = residual_correlation(
            base_preds, ref.targets(), config.residual_segment_len
        )
        diagnostics["base_residual_corr_mean_offdiag"] = mean_offdiag
        header = ",".join(["i", "j", "corr"])
        lines = [header]
        for i in range(corr.shape[0]):
            for j in range(corr.shape[1]):
                lines.append(f"{i + 1},{j + 1},{io.fmt(corr[i, j])}")
        io.atomic_write(_out("residual_correlation.csv"), "\n".join(lines) + "\n")

    report = build_eval_report(results, config.regimes, diagnostics=diagnostics or None)
    io.write_eval_report_json(report, _out("eval_report.json"))
    io.write_eval_report_csv(report, _out("eval_report.csv"))

    bucket_series = {}
    for variant, result in results.items():
        if result.variant == "base_only":
            continue
        series = weight_buckets(result, edges=config.bucket_edges)
        bucket_series[variant] = series
        triples = []
        for name, values in zip(
            ("fast", "medium", "slow", "base"),
            (series.fast, series.medium, series.slow, series.base),
        ):
            triples.extend((t, name, v) for t, v in enumerate(values))
        io.write_tidy_csv(_out(f"weight_buckets_{variant}.csv"), triples)

    regret_rows = []
    regret_curves = {}
    for variant, result in results.items():
        matrix = result.expert_pred_matrix()
        static = hindsight_static_convex(matrix, result.targets())
        curve = cumulative_regret_curve(result, static.weights)
        regret_curves[variant] = curve
        regret_rows.extend((t, variant, v) for t, v in enumerate(curve))
    io.write_tidy_csv(_out("regret_curve.csv"), regret_rows)

    if config.bounded_iterate:
        for variant, result in results.items():
            if result.variant == "base_only":
                continue
            triples = []
            labels = [f"gamma_{g:.10g}" for g in result.gammas]
            for t, record in enumerate(result):
                for lbl, full, slope in zip(
                    labels, record.ewls_full_norms, record.ewls_slope_norms
                ):
                    triples.append((t, f"{lbl}_full", full))
                    triples.append((t, f"{lbl}_slope", slope))
            io.write_tidy_csv(_out(f"bounded_iterate_{variant}.csv"), triples)

    bootstrap_report: Optional[BootstrapReport] = None
    if config.bootstrap is not None:
        ts = results[config.variants[0]].timestamps()
        regime_indices = {
            r.name: np.flatnonzero(evaluation.regime_mask(ts, r))
            for r in config.regimes
        }
        regime_indices[evaluation.OVERALL] = np.arange(len(ts))
        losses = {v: results[v].agg_losses() for v in config.variants}
        bootstrap_report = paired_bootstrap(
            losses, regime_indices, config.bootstrap, anchor=config.anchor
        )
        io.write_bootstrap_report_json(bootstrap_report, _out("bootstrap_report.json"))
        io.write_bootstrap_report_csv(bootstrap_report, _out("bootstrap_report.csv"))

    if config.figures:
        from . import figures

        for variant, series in bucket_series.items():
            figures.render_weight_buckets(
                series, _out(f"weight_buckets_{variant}.png"),
                title=f"aggregation mass by memory bucket ({variant})",
            )
        if regret_curves:
            figures.render_regret_curves(regret_curves, _out("regret_curve.png"))
        if bootstrap_report is not None:
            figures.render_delta_intervals(
                bootstrap_report, _out("bootstrap_deltas.png")
            )

    io.write_json(_resolved_echo(config), _out("resolved_config.json"))
    return paths


@dataclass(frozen=True)
class SweepTable:
    """Per-gamma standalone accuracy across regimes.

    ``rmse[i, j]`` is the RMSE of a single-expert run using ``gammas[i]``
    inside regime ``regime_names[j]``; ``excess`` subtracts the per-regime
    column minimum, so the best gamma in each regime sits at zero.
    """

    gammas: Tuple[float, ...]
    scales: Tuple[float, ...]
    regime_names: Tuple[str, ...]
    rmse: np.ndarray
    excess: np.ndarray

    def best_scale(self, regime: str) -> float:
        """Nominal memory scale of the regime's minimum-RMSE gamma."""
        j = self.regime_names.index(regime)
        return self.scales[int(np.argmin(self.rmse[:, j]))]


def gamma_sweep(
    stream: Sequence[Observation],
    pool: PoolConfig,
    regimes: Sequence[RegimeSpec] = (),
) -> SweepTable:
    """Run each gamma as a standalone corrector and tabulate regime RMSEs.

    Every gamma in the pool's resolved grid is run on its own (single-expert
    pool, same delta0/epsilon0/alpha/clipping/cold-start settings), so the
    table isolates the memory scale from the aggregation rule.
    """
    gammas = [float(g) for g in pool.resolved_gammas()]
    if not gammas:
        raise ConfigurationError("gamma sweep needs at least one gamma in the pool")
    regime_names: List[str] = [r.name for r in regimes] + [evaluation.OVERALL]
    rmse = np.empty((len(gammas), len(regime_names)))
    scales = []
    for i, gamma in enumerate(gammas):
        single = dataclasses.replace(pool, grid=None, gammas=(gamma,))
        result = run_variant(stream, single, "ewls_only")
        table = evaluation.rmse_by_regime(result, regimes)
        rmse[i] = [table[name] for name in regime_names]
        scales.append(float("inf") if gamma >= 1.0 else 1.0 / (1.0 - gamma))
    excess = rmse - rmse.min(axis=0, keepdims=True)
    return SweepTable(
        gammas=tuple(gammas),
        scales=tuple(scales),
        regime_names=tuple(regime_names),
        rmse=rmse,
        excess=excess,
    )


def write_sweep_csv(table: SweepTable, path: str) -> None:
    header = (
        ["gamma", "scale"]
        + [f"rmse_{name}" for name in table.regime_names]
        + [f"excess_{name}" for name in table.regime_names]
    )
    rows = (
        [g, s, *table.rmse[i].tolist(), *table.excess[i].tolist()]
        for i, (g, s) in enumerate(zip(table.gammas, table.scales))
    )
    io.atomic_write(path, io.rows_to_csv(header, rows))
