"""Headless figure rendering for the report path.

Every function takes data already computed elsewhere and writes a PNG next to
the delimited output; nothing here recomputes results. The Agg backend is
forced so rendering works in cron jobs and CI without a display.
"""

from __future__ import annotations

from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bootstrap import BootstrapReport
from .evaluation import BucketSeries

__all__ = [
    "render_weight_buckets",
    "render_regret_curves",
    "render_sweep",
    "render_delta_intervals",
]

_DPI = 150


def render_weight_buckets(series: BucketSeries, path: str, title: str = "") -> None:
    """Stacked aggregation mass split into fast/medium/slow/base buckets."""
    steps = np.arange(len(series.fast))
    fig, ax = plt.subplots(figsize=(9, 4), constrained_layout=True)
    ax.stackplot(
        steps,
        series.fast,
        series.medium,
        series.slow,
        series.base,
        labels=(
            f"fast (h < {series.edges[0]:g})",
            f"medium ({series.edges[0]:g} ≤ h < {series.edges[1]:g})",
            f"slow (h ≥ {series.edges[1]:g})",
            "base",
        ),
        colors=("#d95f02", "#e6ab02", "#1b9e77", "#7570b3"),
        alpha=0.9,
    )
    ax.set_xlim(0, max(len(steps) - 1, 1))
    ax.set_ylim(0, 1)
    ax.set_xlabel("step")
    ax.set_ylabel("aggregation weight")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize="small", ncol=2)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_regret_curves(curves: Mapping[str, np.ndarray], path: str) -> None:
    """Cumulative regret against the hindsight static convex combination."""
    fig, ax = plt.subplots(figsize=(9, 4), constrained_layout=True)
    for name, curve in curves.items():
        ax.plot(np.arange(len(curve)), curve, label=name, linewidth=1.4)
    ax.axhline(0.0, color="0.6", linewidth=0.8, linestyle="--")
    ax.set_xlabel("step")
    ax.set_ylabel("cumulative regret")
    ax.set_title("regret vs. hindsight static convex weights")
    ax.legend(fontsize="small")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_sweep(table, path: str) -> None:
    """Excess RMSE per memory scale, one line per regime (log-scale x)."""
    fig, ax = plt.subplots(figsize=(7, 4.5), constrained_layout=True)
    finite = np.isfinite(np.asarray(table.scales))
    x = np.asarray(table.scales)[finite]
    for j, name in enumerate(table.regime_names):
        y = table.excess[finite, j]
        ax.plot(x, y, marker="o", markersize=3.5, linewidth=1.2, label=name)
    ax.set_xscale("log")
    ax.set_xlabel("nominal memory scale h = 1/(1−γ)")
    ax.set_ylabel("excess RMSE over per-regime best")
    ax.set_title("standalone corrector accuracy by memory scale")
    ax.legend(fontsize="small")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_delta_intervals(report: BootstrapReport, path: str) -> None:
    """Point estimates and bootstrap intervals for RMSE gaps vs. the anchor."""
    deltas = report.deltas
    if not deltas:
        return
    labels = [f"{d.method}\n{d.regime}" for d in deltas]
    points = np.array([d.point for d in deltas])
    lo = np.array([d.lo for d in deltas])
    hi = np.array([d.hi for d in deltas])
    xs = np.arange(len(deltas))
    fig, ax = plt.subplots(
        figsize=(max(6, 1.1 * len(deltas)), 4), constrained_layout=True
    )
    ax.errorbar(
        xs, points, yerr=np.vstack([points - lo, hi - points]),
        fmt="o", capsize=4, color="#1b6ca8", ecolor="#1b6ca8",
    )
    ax.axhline(0.0, color="0.5", linewidth=0.8, linestyle="--")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, fontsize="small")
    ax.set_ylabel(f"Δ RMSE vs. {report.anchor}")
    ax.set_title("paired block-bootstrap RMSE gaps")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
