"""Regime-wise metrics, hindsight benchmarks, and theory diagnostics.

Everything here is a pure function over completed run records: per-regime
RMSE tables, the hindsight best expert and best static convex combination,
cumulative excess-loss curves against that combination, weight-bucket masses
by memory scale, the residual-correlation diversity diagnostic, and the
explicit single-scale tracking penalty with its balancing memory scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .engine import RunResult
from .errors import ConfigurationError, DiagnosticError, ReportingError

__all__ = [
    "RegimeSpec",
    "EvalReport",
    "PsiInputs",
    "StaticConvexResult",
    "BucketSeries",
    "regime_mask",
    "rmse_by_regime",
    "build_eval_report",
    "per_expert_losses",
    "hindsight_best_expert",
    "project_to_simplex",
    "hindsight_static_convex",
    "cumulative_regret_curve",
    "weight_buckets",
    "residual_correlation",
    "psi_h",
    "balancing_scale",
    "tracking_constants",
    "path_length",
]

OVERALL = "overall"
OVERALL_EXCL_WARMUP = "overall_excl_warmup"


@dataclass(frozen=True)
class RegimeSpec:
    """A named contiguous timestamp range, endpoints inclusive."""

    name: str
    start: object
    end: object

    def __post_init__(self):
        if self.name in (OVERALL, OVERALL_EXCL_WARMUP):
            raise ConfigurationError(f"regime name {self.name!r} is reserved")


def regime_mask(timestamps: Sequence, regime: RegimeSpec) -> np.ndarray:
    """Boolean mask of records falling inside the regime (inclusive)."""
    try:
        return np.array([regime.start <= t <= regime.end for t in timestamps], dtype=bool)
    except TypeError as exc:
        raise ReportingError(
            f"regime {regime.name!r} bounds are not comparable with the "
            f"stream timestamps: {exc}"
        ) from exc


def _rmse(losses: np.ndarray) -> float:
    return float(np.sqrt(losses.mean()))


def rmse_by_regime(
    result: RunResult,
    regimes: Sequence[RegimeSpec],
    exclude_warmup: bool = False,
) -> Dict[str, float]:
    """RMSE of the aggregate per regime plus the overall column.

    With ``exclude_warmup`` the cold-start records are dropped from every
    slice. Raises :class:`ReportingError` naming the regime when a slice is
    empty.
    """
    losses = result.agg_losses()
    ts = result.timestamps()
    keep = ~result.warmup_mask() if exclude_warmup else np.ones(len(losses), dtype=bool)
    out: Dict[str, float] = {}
    for regime in regimes:
        mask = regime_mask(ts, regime) & keep
        if not mask.any():
            raise ReportingError(f"regime {regime.name!r} selects no records")
        out[regime.name] = _rmse(losses[mask])
    if not keep.any():
        raise ReportingError("warm-up exclusion removed every record")
    out[OVERALL] = _rmse(losses[keep])
    return out


@dataclass
class EvalReport:
    """Per-method, per-regime RMSE table plus hindsight rows and diagnostics.

    ``columns`` is the ordered column list (regime names, then overall, then
    overall excluding warm-up). ``rows`` maps a row label to its values; row
    order is preserved in ``row_order``. ``hindsight`` flags which rows are
    hindsight benchmarks rather than causal methods.
    """

    columns: List[str]
    row_order: List[str]
    rows: Dict[str, Dict[str, float]]
    hindsight: Dict[str, bool]
    regime_lengths: Dict[str, int]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "rows": [
                {
                    "name": name,
                    "hindsight": self.hindsight[name],
                    "values": {c: self.rows[name].get(c) for c in self.columns},
                }
                for name in self.row_order
            ],
            "regime_lengths": self.regime_lengths,
            "diagnostics": self.diagnostics,
        }


def per_expert_losses(result: RunResult) -> np.ndarray:
    """Cumulative squared loss of each pool expert over the whole run."""
    preds = result.expert_pred_matrix()
    resid = preds - result.targets()[:, None]
    return (resid ** 2).sum(axis=0)


def hindsight_best_expert(losses: Sequence[float]) -> Tuple[int, float]:
    """Index and loss of the expert with smallest cumulative squared loss.

    Ties break toward the smallest index (np.argmin's convention, documented
    here as the contract).
    """
    arr = np.asarray(losses, dtype=float)
    if arr.size == 0:
        raise ConfigurationError("no expert losses supplied")
    idx = int(np.argmin(arr))
    return idx, float(arr[idx])


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    cond = u - css / ks > 0
    rho = np.nonzero(cond)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass
class StaticConvexResult:
    """Best static convex combination of expert predictions, in hindsight."""

    weights: np.ndarray
    loss: float
    converged: bool
    iterations: int
    residual: float


def hindsight_static_convex(
    pred_matrix: np.ndarray,
    targets: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> StaticConvexResult:
    """Minimize sum_t (q @ preds_t - y_t)^2 over the probability simplex.

    Projected gradient descent with exact simplex projection. The step size
    backtracks (halving, with an Armijo sufficient-decrease test) from the
    inverse of the spectral bound 2*sigma_max(Y)^2 on the gradient's Lipschitz
    constant. Convergence is declared when the proximal-gradient residual
    ``||q - proj(q - step*grad)|| / step`` drops below ``tol``. Deterministic;
    if the iteration cap is hit, the best iterate is returned with
    ``converged=False`` and the residual, rather than raising.
    """
    Y = np.asarray(pred_matrix, dtype=float)
    y = np.asarray(targets, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != y.shape[0]:
        raise ConfigurationError(
            f"prediction matrix {Y.shape} does not align with {y.shape[0]} targets"
        )
    T, n = Y.shape
    if n == 1:
        w = np.ones(1)
        return StaticConvexResult(w, float(((Y[:, 0] - y) ** 2).sum()), True, 0, 0.0)

    # Work with the n x n normal system so each of the up-to-10^5 iterations
    # costs O(n^2) instead of O(T n). The quadratic form can cancel near a
    # zero-loss optimum, so the reported loss is recomputed from the full
    # residual at the end.
    G = Y.T @ Y
    c = Y.T @ y
    yy = float(y @ y)

    def objective(q):
        return float(q @ (G @ q) - 2.0 * (c @ q) + yy)

    def gradient(q):
        return 2.0 * (G @ q - c)

    # Inverse spectral bound on the Lipschitz constant of the gradient.
    sigma_sq = float(np.linalg.eigvalsh(G)[-1])
    lipschitz = max(2.0 * sigma_sq, np.finfo(float).tiny)
    step0 = 1.0 / lipschitz

    q = np.full(n, 1.0 / n)
    f_q = objective(q)
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g = gradient(q)
        # Near the optimum both sides of the sufficient-decrease test sit at
        # rounding level; without this slack the step halves to nothing on
        # noise and the search stalls.
        slack = 1e-12 * (1.0 + abs(f_q))
        step = step0
        while True:
            q_next = project_to_simplex(q - step * g)
            delta = q_next - q
            f_next = objective(q_next)
            # Armijo sufficient decrease for the projected step.
            bound = f_q + g @ delta + (delta @ delta) / (2.0 * step)
            if f_next <= bound + slack or step < 1e-18:
                break
            step /= 2.0
        residual = float(np.linalg.norm(delta) / step)
        q, f_q = q_next, f_next
        if residual <= tol:
            break
    converged = residual <= tol
    final_loss = float(((Y @ q - y) ** 2).sum())
    return StaticConvexResult(q, final_loss, converged, iterations, residual)


def build_eval_report(
    results_by_method: Mapping[str, RunResult],
    regimes: Sequence[RegimeSpec],
    include_hindsight: bool = True,
    diagnostics: Optional[dict] = None,
) -> EvalReport:
    """Assemble the RMSE table: one row per method, plus hindsight rows.

    The hindsight rows (best single pool expert by overall loss, and the best
    static convex combination of the full pool) are computed on the first
    method whose pool is the full one (``combined``), falling back to the
    first method given.
    """
    if not results_by_method:
        raise ConfigurationError("no run results supplied")
    columns = [r.name for r in regimes] + [OVERALL, OVERALL_EXCL_WARMUP]
    rows: Dict[str, Dict[str, float]] = {}
    row_order: List[str] = []
    hindsight_flags: Dict[str, bool] = {}

    first = next(iter(results_by_method.values()))
    regime_lengths = {
        r.name: int(regime_mask(first.timestamps(), r).sum()) for r in regimes
    }
    regime_lengths[OVERALL] = len(first)

    for name, result in results_by_method.items():
        with_warm = rmse_by_regime(result, regimes, exclude_warmup=False)
        no_warm = rmse_by_regime(result, regimes, exclude_warmup=True)
        values = dict(with_warm)
        values[OVERALL_EXCL_WARMUP] = no_warm[OVERALL]
        rows[name] = values
        row_order.append(name)
        hindsight_flags[name] = False

    if include_hindsight:
        ref = results_by_method.get("combined", first)
        preds = ref.expert_pred_matrix()
        targets = ref.targets()
        ts = ref.timestamps()
        warm = ref.warmup_mask()
        labels = ref.expert_labels()

        best_idx, _ = hindsight_best_expert(per_expert_losses(ref))
        static = hindsight_static_convex(preds, targets)

        for row_name, series in [
            (f"hindsight_best_expert[{labels[best_idx]}]", preds[:, best_idx]),
            ("hindsight_static_convex", preds @ static.weights),
        ]:
            losses = (series - targets) ** 2
            values = {}
            for regime in regimes:
                mask = regime_mask(ts, regime)
                if not mask.any():
                    raise ReportingError(f"regime {regime.name!r} selects no records")
                values[regime.name] = _rmse(losses[mask])
            values[OVERALL] = _rmse(losses)
            values[OVERALL_EXCL_WARMUP] = _rmse(losses[~warm]) if (~warm).any() else float("nan")
            rows[row_name] = values
            row_order.append(row_name)
            hindsight_flags[row_name] = True

    return EvalReport(
        columns=columns,
        row_order=row_order,
        rows=rows,
        hindsight=hindsight_flags,
        regime_lengths=regime_lengths,
        diagnostics=dict(diagnostics or {}),
    )


def cumulative_regret_curve(result: RunResult, static_weights: np.ndarray) -> np.ndarray:
    """Running sum of (aggregate loss - static-combination loss) per step."""
    preds = result.expert_pred_matrix()
    targets = result.targets()
    static_weights = np.asarray(static_weights, dtype=float)
    if static_weights.shape != (preds.shape[1],):
        raise ConfigurationError(
            f"{static_weights.shape} weights for {preds.shape[1]} experts"
        )
    static_losses = (preds @ static_weights - targets) ** 2
    return np.cumsum(result.agg_losses() - static_losses)


@dataclass
class BucketSeries:
    """Per-step MLpol weight mass by memory bucket plus total base mass.

    ``fast`` collects EWLS experts with scale h < edges[0], ``medium`` those
    with edges[0] <= h < edges[1], ``slow`` h >= edges[1] (the no-forgetting
    endpoint, h = inf, lands here). The four masses sum to 1 at every step.
    """

    fast: np.ndarray
    medium: np.ndarray
    slow: np.ndarray
    base: np.ndarray
    edges: Tuple[float, float]

    def stacked(self) -> np.ndarray:
        return np.column_stack([self.fast, self.medium, self.slow, self.base])


def weight_buckets(
    result: RunResult, edges: Tuple[float, float] = (100.0, 1000.0)
) -> BucketSeries:
    """Bucket the per-step weight vector by the experts' nominal memory scale."""
    if not (0 < edges[0] < edges[1]):
        raise ConfigurationError(f"bucket edges must be increasing, got {edges}")
    W = result.weight_matrix()
    scales = result.scales
    if result.variant == "base_only":
        base_mass = W.sum(axis=1)
        zero = np.zeros(len(W))
        return BucketSeries(zero, zero.copy(), zero.copy(), base_mass, edges)
    if result.variant == "ewls_only":
        ewls_w = W
        base_mass = np.zeros(len(W))
    else:
        base_mass = W[:, : result.m_base].sum(axis=1)
        ewls_w = W[:, result.m_base:]
    fast = ewls_w[:, scales < edges[0]].sum(axis=1)
    medium = ewls_w[:, (scales >= edges[0]) & (scales < edges[1])].sum(axis=1)
    slow = ewls_w[:, scales >= edges[1]].sum(axis=1)
    return BucketSeries(fast, medium, slow, base_mass, edges)


def residual_correlation(
    base_pred_matrix: np.ndarray, targets: np.ndarray, segment_len: int
) -> Tuple[np.ndarray, float]:
    """Pearson correlation of base-prediction residuals on an initial segment.

    Returns the full correlation matrix of the ``prediction - target`` columns
    over the first ``segment_len`` rows, and the mean of its strictly
    off-diagonal entries (NaN when there is a single column). High mean
    off-diagonal correlation flags a pool with little diversity left for
    aggregation to exploit.

    Raises
    ------
    DiagnosticError
        Naming the column, when a residual column has zero variance on the
        segment.
    """
    Z = np.asarray(base_pred_matrix, dtype=float)
    y = np.asarray(targets, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise ConfigurationError(
            f"prediction matrix {Z.shape} does not align with {y.shape[0]} targets"
        )
    if not (1 <= segment_len <= Z.shape[0]):
        raise ConfigurationError(
            f"segment_len must be in [1, {Z.shape[0]}], got {segment_len}"
        )
    resid = Z[:segment_len] - y[:segment_len, None]
    stds = resid.std(axis=0)
    for j, s in enumerate(stds):
        if s == 0.0:
            raise DiagnosticError(
                f"residual column {j} has zero variance on the first "
                f"{segment_len} rows"
            )
    corr = np.corrcoef(resid, rowvar=False)
    corr = np.atleast_2d(corr)
    m = corr.shape[0]
    if m < 2:
        return corr, float("nan")
    off = corr[~np.eye(m, dtype=bool)]
    return corr, float(off.mean())


@dataclass(frozen=True)
class PsiInputs:
    """Assumption constants and problem sizes for the tracking penalty.

    These bound the comparator class (coefficient radius ``R``, input bound
    ``B_z``, the derived scale ``D``); the tool never estimates them from data.
    ``P`` is the comparator path length, ``h`` the memory scale under
    evaluation.
    """

    delta: float
    R: float
    D: float
    B_z: float
    d: int
    T: int
    h: float
    P: float

    def __post_init__(self):
        for name in ("delta", "R", "D", "B_z", "d", "T", "h"):
            if not (getattr(self, name) > 0):
                raise ConfigurationError(f"{name} must be positive")
        if self.P < 0:
            raise ConfigurationError("P must be nonnegative")


def psi_h(inputs: PsiInputs) -> float:
    """Explicit single-scale tracking penalty at memory scale h.

    Sum of the initialization term delta*R^2, the logarithmic term
    D^2*d*log(1 + B_z^2*h/delta), the finite-memory term 2*D^2*d*T/h, and the
    tracking term 4*R*(delta + B_z^2*h)*P.
    """
    i = inputs
    return (
        i.delta * i.R ** 2
        + i.D ** 2 * i.d * math.log(1.0 + i.B_z ** 2 * i.h / i.delta)
        + 2.0 * i.D ** 2 * i.d * i.T / i.h
        + 4.0 * i.R * (i.delta + i.B_z ** 2 * i.h) * i.P
    )


def tracking_constants(R: float, B_z: float, D: float) -> Tuple[float, float]:
    """(C1, C2) = (2*D^2, 8*R*B_z^2): the finite-memory and tracking weights."""
    return 2.0 * D ** 2, 8.0 * R * B_z ** 2


def balancing_scale(d: int, T: int, P: float, C1: float, C2: float) -> float:
    """Memory scale balancing C1*d*T/h against C2*h*P.

    Returns ``sqrt(C1*d*T/(C2*P))`` for P > 0; a zero path length favours the
    longest available memory, signalled as +inf.
    """
    if P < 0:
        raise ConfigurationError("path length must be nonnegative")
    if P == 0.0:
        return math.inf
    return math.sqrt(C1 * d * T / (C2 * P))


def path_length(comparator_path: np.ndarray) -> float:
    """Total Euclidean movement sum_t ||u_t - u_{t-1}|| of a coefficient path."""
    path = np.asarray(comparator_path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    if len(path) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum())
