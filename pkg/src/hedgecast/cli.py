"""Command-line entry points.

Subcommands::

    hedgecast run         full pipeline on a CSV stream or synthetic scenario
    hedgecast sweep-gamma per-gamma standalone accuracy table and figure
    hedgecast bootstrap   paired block bootstrap from an aligned losses file
    hedgecast synth       generate a synthetic scenario to CSV
    hedgecast grid        print the resolved gamma/epsilon grid

All failures raise through :class:`~hedgecast.errors.HedgecastError` and exit
with a nonzero status; partially written output files are never left behind.
"""

from __future__ import annotations

import datetime as _dt
import os
from typing import Optional, Tuple

import click
import numpy as np

from . import evaluation, io, synthetic
from .bootstrap import BootstrapConfig, paired_bootstrap
from .errors import ConfigurationError, HedgecastError
from .evaluation import RegimeSpec
from .pool import GridSpec, PoolConfig, grid_covers, inflation_schedule, nominal_scales
from .runner import (
    RunConfig,
    gamma_sweep,
    load_run_config,
    run_experiment,
    write_sweep_csv,
)

_PRESETS = {
    "level-shift": synthetic.level_shift_scenario,
    "two-phase-drift": synthetic.two_phase_drift_scenario,
}


def _fail(exc: HedgecastError) -> "click.ClickException":
    err = click.ClickException(str(exc))
    err.exit_code = 1
    return err


def _parse_timestamp_text(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return _dt.date.fromisoformat(text)
    except ValueError:
        raise ConfigurationError(
            f"{text!r} is neither an integer nor an ISO-8601 date"
        )


def _parse_regime(text: str) -> RegimeSpec:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(
            f"regime {text!r} must look like name:start:end"
        )
    name, start, end = parts
    return RegimeSpec(
        name=name, start=_parse_timestamp_text(start), end=_parse_timestamp_text(end)
    )


def _parse_block_override(text: str) -> Tuple[str, int]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigurationError(f"block override {text!r} must look like name:len")
    return parts[0], int(parts[1])


def _pool_from_flags(
    m_base: int,
    h_min: float,
    h_max: float,
    k: int,
    static: bool,
    gamma: Tuple[float, ...],
    delta0: float,
    epsilon0: float,
    alpha: float,
    clip: Optional[float],
    coldstart: Optional[int],
) -> PoolConfig:
    if gamma:
        return PoolConfig(
            m_base=m_base, gammas=tuple(gamma), delta0=delta0, epsilon0=epsilon0,
            alpha=alpha, clip_radius=clip, coldstart_len=coldstart,
        )
    return PoolConfig(
        m_base=m_base,
        grid=GridSpec(h_min=h_min, h_max=h_max, k_finite=k, include_static=static),
        delta0=delta0, epsilon0=epsilon0, alpha=alpha,
        clip_radius=clip, coldstart_len=coldstart,
    )


_pool_options = [
    click.option("--h-min", type=float, default=20.0, show_default=True,
                 help="Smallest nominal memory scale in the geometric grid."),
    click.option("--h-max", type=float, default=5000.0, show_default=True,
                 help="Largest finite nominal memory scale."),
    click.option("--k", type=int, default=15, show_default=True,
                 help="Number of finite grid points."),
    click.option("--static/--no-static", default=True, show_default=True,
                 help="Append an infinite-memory (gamma=1) corrector."),
    click.option("--gamma", type=float, multiple=True,
                 help="Explicit forgetting factor(s); overrides the grid."),
    click.option("--delta0", type=float, default=1e-3, show_default=True,
                 help="Ridge strength of the discounted prior."),
    click.option("--epsilon0", type=float, default=1e-8, show_default=True,
                 help="Covariance inflation at the fastest scale."),
    click.option("--alpha", type=float, default=1.0, show_default=True,
                 help="Inflation decay exponent across the grid."),
    click.option("--clip", type=float, default=None,
                 help="Clip every pooled prediction to [-B, B]."),
    click.option("--coldstart", type=int, default=None,
                 help="Warm-up length before recursive updates (default m+5)."),
]


def _add_options(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func
    return wrap


@click.group()
@click.version_option(package_name="hedgecast")
def main() -> None:
    """Memory-hedged online correction of base forecasts."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML/JSON run config; overrides all other flags.")
@click.option("--input", "input_csv", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Stream CSV (timestamp, target, base columns).")
@click.option("--preset", type=click.Choice(sorted(_PRESETS)), default=None,
              help="Built-in synthetic scenario instead of --input.")
@click.option("--timestamp-col", default="timestamp", show_default=True)
@click.option("--target-col", default="y", show_default=True)
@click.option("--base-col", "base_cols", multiple=True,
              help="Base prediction column (repeatable, keeps order); default: all others.")
@click.option("--m-base", type=int, default=None,
              help="Number of base forecasters (required with --preset).")
@_add_options(_pool_options)
@click.option("--variant", "variants", multiple=True,
              type=click.Choice(["combined", "base_only", "ewls_only"]),
              help="Variant(s) to run; default: combined and base_only.")
@click.option("--regime", "regimes", multiple=True,
              help="Evaluation window name:start:end (repeatable).")
@click.option("--bootstrap/--no-bootstrap", "do_bootstrap", default=False,
              show_default=True, help="Paired block bootstrap over the variants.")
@click.option("--replicates", type=int, default=10_000, show_default=True)
@click.option("--block-len", type=int, default=14, show_default=True)
@click.option("--block-override", "block_overrides", multiple=True,
              help="Per-regime block length name:len (repeatable).")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Bootstrap seed.")
@click.option("--anchor", default=None, help="Bootstrap anchor variant.")
@click.option("--residual-len", type=int, default=None,
              help="Rows used for the base-residual correlation diagnostic.")
@click.option("--bounded-iterate/--no-bounded-iterate", default=False,
              help="Emit per-expert coefficient-norm traces.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
def run_cmd(config_path, input_csv, preset, timestamp_col, target_col, base_cols,
            m_base, h_min, h_max, k, static, gamma, delta0, epsilon0, alpha, clip,
            coldstart, variants, regimes, do_bootstrap, replicates, block_len,
            block_overrides, seed, anchor, residual_len, bounded_iterate, figures,
            outdir) -> None:
    """Run the full pipeline and write reports, CSVs, and figures to OUTDIR."""
    try:
        if config_path is not None:
            config = load_run_config(config_path)
        else:
            if (input_csv is None) == (preset is None):
                raise ConfigurationError(
                    "exactly one of --input/--preset is required without --config"
                )
            scenario = None
            if preset is not None:
                if m_base is None:
                    scenario = _PRESETS[preset]()
                else:
                    scenario = _PRESETS[preset](m_base=m_base)
                m = scenario.m_base
            elif m_base is not None:
                m = m_base
            else:
                header = _peek_header(input_csv)
                declared = list(base_cols) or [
                    c for c in header if c not in (timestamp_col, target_col)
                ]
                m = len(declared)
            if m < 1:
                raise ConfigurationError("no base prediction columns found")
            pool = _pool_from_flags(
                m, h_min, h_max, k, static, gamma, delta0, epsilon0, alpha,
                clip, coldstart,
            )
            bootstrap = None
            if do_bootstrap:
                overrides = dict(
                    _parse_block_override(b) for b in block_overrides
                ) or {"lockdown": 7}
                bootstrap = BootstrapConfig(
                    replicates=replicates, block_len_default=block_len,
                    block_len_overrides=overrides, seed=seed,
                )
            config = RunConfig(
                pool=pool,
                input_csv=input_csv,
                scenario=scenario,
                timestamp_col=timestamp_col,
                target_col=target_col,
                base_cols=tuple(base_cols) or None,
                variants=tuple(variants) or ("combined", "base_only"),
                regimes=tuple(_parse_regime(r) for r in regimes),
                bootstrap=bootstrap,
                anchor=anchor,
                residual_segment_len=residual_len,
                bounded_iterate=bounded_iterate,
                figures=figures,
            )
        paths = run_experiment(config, outdir)
    except HedgecastError as exc:
        raise _fail(exc)
    for name in sorted(paths):
        click.echo(f"wrote {paths[name]}")


def _peek_header(path: str):
    import csv as _csv

    with open(path, "r", encoding="utf-8", newline="") as handle:
        try:
            return next(_csv.reader(handle))
        except StopIteration:
            raise ConfigurationError(f"{path}: empty file, header row required")


@main.command("sweep-gamma")
@click.option("--input", "input_csv", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Stream CSV to sweep over.")
@click.option("--preset", type=click.Choice(sorted(_PRESETS)), default=None,
              help="Built-in synthetic scenario instead of --input.")
@click.option("--timestamp-col", default="timestamp", show_default=True)
@click.option("--target-col", default="y", show_default=True)
@click.option("--base-col", "base_cols", multiple=True)
@_add_options(_pool_options)
@click.option("--regime", "regimes", multiple=True,
              help="Evaluation window name:start:end (repeatable).")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
def sweep_cmd(input_csv, preset, timestamp_col, target_col, base_cols, h_min, h_max,
              k, static, gamma, delta0, epsilon0, alpha, clip, coldstart, regimes,
              figures, outdir) -> None:
    """Table each gamma as a standalone corrector across regimes."""
    try:
        if (input_csv is None) == (preset is None):
            raise ConfigurationError("exactly one of --input/--preset is required")
        if preset is not None:
            stream, _ = synthetic.generate(_PRESETS[preset]())
        else:
            stream = io.ingest_csv(
                input_csv, timestamp_col=timestamp_col, target_col=target_col,
                base_cols=list(base_cols) or None,
            )
        m = len(stream[0].z)
        pool = _pool_from_flags(
            m, h_min, h_max, k, static, gamma, delta0, epsilon0, alpha, clip,
            coldstart,
        )
        table = gamma_sweep(stream, pool, [_parse_regime(r) for r in regimes])
        os.makedirs(outdir, exist_ok=True)
        csv_path = os.path.join(outdir, "sweep.csv")
        write_sweep_csv(table, csv_path)
        click.echo(f"wrote {csv_path}")
        if figures:
            from . import figures as _figures

            png_path = os.path.join(outdir, "sweep.png")
            _figures.render_sweep(table, png_path)
            click.echo(f"wrote {png_path}")
        for name in table.regime_names:
            click.echo(f"best scale in {name}: h = {table.best_scale(name):g}")
    except HedgecastError as exc:
        raise _fail(exc)


@main.command("bootstrap")
@click.option("--losses", "losses_csv", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Aligned per-step squared-loss CSV (timestamp + method columns).")
@click.option("--regime", "regimes", multiple=True,
              help="Resampling window name:start:end (repeatable).")
@click.option("--anchor", default=None, help="Method differences are taken against.")
@click.option("--replicates", type=int, default=10_000, show_default=True)
@click.option("--block-len", type=int, default=14, show_default=True)
@click.option("--block-override", "block_overrides", multiple=True,
              help="Per-regime block length name:len (repeatable).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--level", "levels", type=float, multiple=True,
              help="Two percentile levels (default 0.025 0.975).")
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
def bootstrap_cmd(losses_csv, regimes, anchor, replicates, block_len,
                  block_overrides, seed, levels, outdir) -> None:
    """Paired moving-block bootstrap of per-regime RMSEs and gaps."""
    try:
        ts, losses = io.read_losses_csv(losses_csv)
        specs = [_parse_regime(r) for r in regimes]
        regime_indices = {
            s.name: np.flatnonzero(evaluation.regime_mask(ts, s)) for s in specs
        }
        regime_indices[evaluation.OVERALL] = np.arange(len(ts))
        overrides = dict(_parse_block_override(b) for b in block_overrides) or {
            "lockdown": 7
        }
        config = BootstrapConfig(
            replicates=replicates, block_len_default=block_len,
            block_len_overrides=overrides, seed=seed,
            levels=tuple(levels) if levels else (0.025, 0.975),
        )
        report = paired_bootstrap(losses, regime_indices, config, anchor=anchor)
        os.makedirs(outdir, exist_ok=True)
        json_path = os.path.join(outdir, "bootstrap_report.json")
        csv_path = os.path.join(outdir, "bootstrap_report.csv")
        io.write_bootstrap_report_json(report, json_path)
        io.write_bootstrap_report_csv(report, csv_path)
        for d in report.deltas:
            flag = "*" if d.significant else " "
            click.echo(
                f"{d.regime:>16s}  {d.method} - {report.anchor}: "
                f"{d.point:+.4f}  [{d.lo:+.4f}, {d.hi:+.4f}] {flag}"
            )
        click.echo(f"wrote {json_path}")
        click.echo(f"wrote {csv_path}")
    except HedgecastError as exc:
        raise _fail(exc)


@main.command("synth")
@click.option("--preset", type=click.Choice(sorted(_PRESETS)), required=True)
@click.option("--seed", type=int, default=None, help="Override the preset seed.")
@click.option("--m-base", type=int, default=None, help="Override the base count.")
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
def synth_cmd(preset, seed, m_base, outdir) -> None:
    """Write a synthetic stream, its comparator path, and the scenario spec."""
    try:
        kwargs = {}
        if seed is not None:
            kwargs["seed"] = seed
        if m_base is not None:
            kwargs["m_base"] = m_base
        spec = _PRESETS[preset](**kwargs)
        stream, path_matrix = synthetic.generate(spec)
        os.makedirs(outdir, exist_ok=True)
        stream_path = os.path.join(outdir, "stream.csv")
        path_path = os.path.join(outdir, "comparator_path.csv")
        spec_path = os.path.join(outdir, "scenario.json")
        io.write_stream_csv(stream, stream_path)
        io.write_path_csv(path_matrix, path_path)
        io.write_json(io.scenario_to_dict(spec), spec_path)
        for p in (stream_path, path_path, spec_path):
            click.echo(f"wrote {p}")
    except HedgecastError as exc:
        raise _fail(exc)


@main.command("grid")
@click.option("--h-min", type=float, default=20.0, show_default=True)
@click.option("--h-max", type=float, default=5000.0, show_default=True)
@click.option("--k", type=int, default=15, show_default=True)
@click.option("--static/--no-static", default=True, show_default=True)
@click.option("--epsilon0", type=float, default=1e-8, show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--h-star", type=float, default=None,
              help="Report the nearest grid scale to this target.")
def grid_cmd(h_min, h_max, k, static, epsilon0, alpha, h_star) -> None:
    """Print the resolved gamma / scale / inflation grid."""
    try:
        spec = GridSpec(h_min=h_min, h_max=h_max, k_finite=k, include_static=static)
        pool = PoolConfig(m_base=1, grid=spec, epsilon0=epsilon0, alpha=alpha)
        gammas = pool.resolved_gammas()
        scales = nominal_scales(gammas)
        epsilons = inflation_schedule(gammas, epsilon0, alpha)
        click.echo(f"{'idx':>3s}  {'gamma':>12s}  {'scale h':>12s}  {'epsilon':>12s}")
        for i, (g, h, e) in enumerate(zip(gammas, scales, epsilons)):
            h_text = "inf" if not np.isfinite(h) else f"{h:.4f}"
            click.echo(f"{i:>3d}  {g:>12.8f}  {h_text:>12s}  {e:>12.4e}")
        if h_star is not None:
            idx, gap = grid_covers(spec, h_star)
            click.echo(
                f"nearest to h* = {h_star:g}: index {idx} "
                f"(h = {scales[idx]:.4f}, log-ratio gap {gap:.4f})"
            )
    except HedgecastError as exc:
        raise _fail(exc)


if __name__ == "__main__":
    main()
