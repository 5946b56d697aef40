"""CSV ingestion/emission and config (de)serialization.

Dialect: comma-separated, header row required, UTF-8, '.' decimal separator,
no quoting of numerics. Timestamps are ISO-8601 calendar dates or plain
integers; mixing the two in one file is rejected. All numeric output is
written with ``repr``, the shortest representation that parses back to the
exact same double, so emit -> ingest -> emit round-trips byte-identically.
File writes are atomic (write to a temp file in the same directory, then
rename), so partially written outputs never appear.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import tempfile
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .bootstrap import BootstrapConfig, BootstrapReport
from .engine import Observation, RunResult
from .errors import ConfigurationError, IngestionError
from .evaluation import EvalReport, RegimeSpec
from .pool import GridSpec, PoolConfig
from .synthetic import ScenarioSpec, SegmentSpec

__all__ = [
    "atomic_write",
    "fmt",
    "ingest_csv",
    "rows_to_csv",
    "write_stream_csv",
    "write_path_csv",
    "write_records_csv",
    "write_losses_csv",
    "read_losses_csv",
    "write_eval_report_json",
    "write_eval_report_csv",
    "write_bootstrap_report_json",
    "write_bootstrap_report_csv",
    "write_tidy_csv",
    "write_json",
    "pool_config_to_dict",
    "pool_config_from_dict",
    "scenario_to_dict",
    "scenario_from_dict",
    "regime_to_dict",
    "regime_from_dict",
    "bootstrap_config_to_dict",
    "bootstrap_config_from_dict",
]


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a same-directory temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value) -> str:
    """Full round-trip text for a float; plain str for everything else."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _format_timestamp(ts) -> str:
    if isinstance(ts, _dt.date):
        return ts.isoformat()
    return str(int(ts))


def _parse_timestamp(text: str, mode: Optional[str]) -> Tuple[object, str]:
    """Parse an integer or ISO date; ``mode`` locks the type after row one."""
    text = text.strip()
    if mode in (None, "int"):
        try:
            return int(text), "int"
        except ValueError:
            if mode == "int":
                raise
    try:
        return _dt.date.fromisoformat(text), "date"
    except ValueError:
        raise ValueError(f"{text!r} is neither an integer nor an ISO-8601 date")


def ingest_csv(
    path: str,
    timestamp_col: str = "timestamp",
    target_col: str = "y",
    base_cols: Optional[Sequence[str]] = None,
) -> List[Observation]:
    """Read a prediction stream. Base columns keep the declared order.

    When ``base_cols`` is omitted, every non-timestamp, non-target column is
    taken as a base prediction in file order. Errors identify the offending
    data row (1-based) and column.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, header row required")
        for col in (timestamp_col, target_col):
            if col not in header:
                raise IngestionError(f"{path}: missing column", column=col)
        if base_cols is None:
            base_cols = [c for c in header if c not in (timestamp_col, target_col)]
        else:
            for col in base_cols:
                if col not in header:
                    raise IngestionError(f"{path}: missing column", column=col)
        if not base_cols:
            raise IngestionError(f"{path}: no base prediction columns")
        ts_i = header.index(timestamp_col)
        y_i = header.index(target_col)
        base_is = [header.index(c) for c in base_cols]

        stream: List[Observation] = []
        mode: Optional[str] = None
        prev_ts = None
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise IngestionError(
                    f"expected {len(header)} cells, found {len(row)}", row=row_num
                )
            try:
                ts, mode = _parse_timestamp(row[ts_i], mode)
            except ValueError as exc:
                raise IngestionError(str(exc), row=row_num, column=timestamp_col) from exc
            if prev_ts is not None and not ts > prev_ts:
                raise IngestionError(
                    f"timestamp {row[ts_i]!r} does not increase", row=row_num,
                    column=timestamp_col,
                )
            prev_ts = ts

            def _cell(i: int, col: str) -> float:
                try:
                    v = float(row[i])
                except ValueError as exc:
                    raise IngestionError(
                        f"unparsable number {row[i]!r}", row=row_num, column=col
                    ) from exc
                if not np.isfinite(v):
                    raise IngestionError(
                        f"non-finite value {row[i]!r}", row=row_num, column=col
                    )
                return v

            y = _cell(y_i, target_col)
            z = np.array([_cell(i, c) for i, c in zip(base_is, base_cols)])
            stream.append(Observation(timestamp=ts, y=y, z=z))
    if not stream:
        raise IngestionError(f"{path}: no data rows")
    return stream


def rows_to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_stream_csv(
    stream: Sequence[Observation], path: str, base_names: Optional[Sequence[str]] = None
) -> None:
    m = len(stream[0].z)
    if base_names is None:
        base_names = [f"base_{i + 1}" for i in range(m)]
    header = ["timestamp", "y", *base_names]
    rows = (
        [_format_timestamp(o.timestamp), o.y, *o.z.tolist()] for o in stream
    )
    atomic_write(path, rows_to_csv(header, rows))


def write_path_csv(path_matrix: np.ndarray, path: str) -> None:
    """Comparator coefficient path, one row per step, intercept column last."""
    d = path_matrix.shape[1]
    header = ["step", *[f"coef_{i + 1}" for i in range(d - 1)], "intercept"]
    rows = ([t, *row.tolist()] for t, row in enumerate(path_matrix))
    atomic_write(path, rows_to_csv(header, rows))


def write_records_csv(result: RunResult, path: str) -> None:
    """Per-step records: timestamp, y, agg_pred, expert_pred_1..N, weight_1..N."""
    n = result.n_active
    header = (
        ["timestamp", "y", "agg_pred"]
        + [f"expert_pred_{j + 1}" for j in range(n)]
        + [f"weight_{j + 1}" for j in range(n)]
    )
    rows = (
        [
            _format_timestamp(r.timestamp),
            r.y,
            r.agg_pred,
            *r.expert_preds.tolist(),
            *r.weights.tolist(),
        ]
        for r in result
    )
    atomic_write(path, rows_to_csv(header, rows))


def write_losses_csv(results_by_method: Mapping[str, RunResult], path: str) -> None:
    """Aligned per-step squared losses, one column per method."""
    methods = list(results_by_method)
    first = results_by_method[methods[0]]
    ts = first.timestamps()
    losses = {}
    for name, result in results_by_method.items():
        if result.timestamps() != ts:
            raise IngestionError(f"method {name!r} is not aligned with {methods[0]!r}")
        losses[name] = result.agg_losses()
    header = ["timestamp", *methods]
    rows = (
        [_format_timestamp(t), *[losses[m][i] for m in methods]]
        for i, t in enumerate(ts)
    )
    atomic_write(path, rows_to_csv(header, rows))


def read_losses_csv(path: str) -> Tuple[List[object], Dict[str, np.ndarray]]:
    """Read a losses file back: (timestamps, method -> squared-loss array)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, header row required")
        if header[:1] != ["timestamp"] or len(header) < 2:
            raise IngestionError(f"{path}: expected 'timestamp' plus method columns")
        methods = header[1:]
        ts: List[object] = []
        cols: List[List[float]] = [[] for _ in methods]
        mode: Optional[str] = None
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise IngestionError(
                    f"expected {len(header)} cells, found {len(row)}", row=row_num
                )
            try:
                t, mode = _parse_timestamp(row[0], mode)
            except ValueError as exc:
                raise IngestionError(str(exc), row=row_num, column="timestamp") from exc
            ts.append(t)
            for j, name in enumerate(methods):
                try:
                    v = float(row[j + 1])
                except ValueError as exc:
                    raise IngestionError(
                        f"unparsable number {row[j + 1]!r}", row=row_num, column=name
                    ) from exc
                cols[j].append(v)
    return ts, {name: np.array(col) for name, col in zip(methods, cols)}


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, _dt.date):
        return obj.isoformat()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def write_json(obj, path: str) -> None:
    atomic_write(path, json.dumps(obj, indent=2, default=_json_default) + "\n")


def write_eval_report_json(report: EvalReport, path: str) -> None:
    write_json(report.to_dict(), path)


def write_eval_report_csv(report: EvalReport, path: str) -> None:
    header = ["method", "hindsight", *report.columns]
    rows = (
        [name, str(report.hindsight[name]).lower()]
        + [report.rows[name].get(c, float("nan")) for c in report.columns]
        for name in report.row_order
    )
    atomic_write(path, rows_to_csv(header, rows))


def write_bootstrap_report_json(report: BootstrapReport, path: str) -> None:
    write_json(report.to_dict(), path)


def write_bootstrap_report_csv(report: BootstrapReport, path: str) -> None:
    header = ["kind", "method", "regime", "point", "lo", "hi", "significant"]
    rows: List[list] = []
    for i in report.intervals:
        rows.append(["rmse", i.method, i.regime, i.point, i.lo, i.hi, ""])
    for d in report.deltas:
        rows.append(
            ["delta_rmse", d.method, d.regime, d.point, d.lo, d.hi,
             str(d.significant).lower()]
        )
    atomic_write(path, rows_to_csv(header, rows))


def write_tidy_csv(
    path: str, triples: Iterable[Tuple[object, str, float]],
    columns: Tuple[str, str, str] = ("step", "series", "value"),
) -> None:
    """Long-format (step, series, value) data behind the rendered figures."""
    atomic_write(path, rows_to_csv(list(columns), triples))


# ---------------------------------------------------------------------------
# Config serialization. The resolved-config echo is JSON and must load back
# into an identical configuration, so every to_dict has an exact from_dict.
# ---------------------------------------------------------------------------

def pool_config_to_dict(config: PoolConfig) -> dict:
    return {
        "m_base": config.m_base,
        "grid": None
        if config.grid is None
        else {
            "h_min": config.grid.h_min,
            "h_max": config.grid.h_max,
            "k_finite": config.grid.k_finite,
            "include_static": config.grid.include_static,
        },
        "gammas": None if config.gammas is None else list(config.gammas),
        "delta0": config.delta0,
        "epsilon0": config.epsilon0,
        "alpha": config.alpha,
        "clip_radius": config.clip_radius,
        "coldstart_len": config.coldstart_len,
    }


def pool_config_from_dict(d: Mapping) -> PoolConfig:
    grid = None
    if d.get("grid") is not None:
        g = d["grid"]
        grid = GridSpec(
            h_min=float(g["h_min"]),
            h_max=float(g["h_max"]),
            k_finite=int(g["k_finite"]),
            include_static=bool(g.get("include_static", False)),
        )
    gammas = d.get("gammas")
    return PoolConfig(
        m_base=int(d["m_base"]),
        grid=grid,
        gammas=None if gammas is None else tuple(float(g) for g in gammas),
        delta0=float(d.get("delta0", 1e-3)),
        epsilon0=float(d.get("epsilon0", 1e-8)),
        alpha=float(d.get("alpha", 1.0)),
        clip_radius=None if d.get("clip_radius") is None else float(d["clip_radius"]),
        coldstart_len=None if d.get("coldstart_len") is None else int(d["coldstart_len"]),
    )


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "T": spec.T,
        "m_base": spec.m_base,
        "segments": [
            {
                "length": s.length,
                "coeffs": list(s.coeffs),
                "drift_rate": s.drift_rate,
                "level_shift": s.level_shift,
            }
            for s in spec.segments
        ],
        "noise_sd": spec.noise_sd,
        "base_error_sd": spec.base_error_sd,
        "base_error_corr": spec.base_error_corr,
        "seed": spec.seed,
    }


def scenario_from_dict(d: Mapping) -> ScenarioSpec:
    return ScenarioSpec(
        T=int(d["T"]),
        m_base=int(d["m_base"]),
        segments=tuple(
            SegmentSpec(
                length=int(s["length"]),
                coeffs=tuple(float(c) for c in s["coeffs"]),
                drift_rate=float(s.get("drift_rate", 0.0)),
                level_shift=float(s.get("level_shift", 0.0)),
            )
            for s in d["segments"]
        ),
        noise_sd=float(d.get("noise_sd", 0.02)),
        base_error_sd=float(d.get("base_error_sd", 0.25)),
        base_error_corr=float(d.get("base_error_corr", 0.0)),
        seed=int(d.get("seed", 0)),
    )


def _timestamp_to_json(ts):
    return ts.isoformat() if isinstance(ts, _dt.date) else int(ts)


def _timestamp_from_json(v):
    if isinstance(v, str):
        return _dt.date.fromisoformat(v)
    return int(v)


def regime_to_dict(regime: RegimeSpec) -> dict:
    return {
        "name": regime.name,
        "start": _timestamp_to_json(regime.start),
        "end": _timestamp_to_json(regime.end),
    }


def regime_from_dict(d: Mapping) -> RegimeSpec:
    return RegimeSpec(
        name=str(d["name"]),
        start=_timestamp_from_json(d["start"]),
        end=_timestamp_from_json(d["end"]),
    )


def bootstrap_config_to_dict(config: BootstrapConfig) -> dict:
    return {
        "replicates": config.replicates,
        "block_len_default": config.block_len_default,
        "block_len_overrides": dict(config.block_len_overrides),
        "seed": config.seed,
        "levels": list(config.levels),
    }


def bootstrap_config_from_dict(d: Mapping) -> BootstrapConfig:
    return BootstrapConfig(
        replicates=int(d.get("replicates", 10_000)),
        block_len_default=int(d.get("block_len_default", 14)),
        block_len_overrides={
            str(k): int(v) for k, v in d.get("block_len_overrides", {"lockdown": 7}).items()
        },
        seed=int(d.get("seed", 0)),
        levels=tuple(float(x) for x in d.get("levels", (0.025, 0.975))),
    )
