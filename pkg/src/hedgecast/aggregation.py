"""MLpol aggregation over a finite expert pool under squared loss.

MLpol (the polynomial-potential aggregation rule with the gradient trick) keeps
one cumulative pseudo-regret per expert,

    r_j = 2 * (agg - y) * (agg - pred_j),

and weights experts by the positive part of their cumulative pseudo-regret,
normalized; when every positive part is zero (including mid-stream) the
weights fall back to uniform. The rule is parameter-free and its aggregate
never leaves the convex hull of the expert predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalFailureError

__all__ = ["MlpolState", "initial_state", "aggregate", "observe", "weights"]


@dataclass
class MlpolState:
    """Cumulative pseudo-regrets and the current simplex weights."""

    regrets: np.ndarray
    weights: np.ndarray

    @property
    def n_experts(self) -> int:
        return len(self.regrets)


def initial_state(n_experts: int) -> MlpolState:
    """Fresh state over ``n_experts`` experts: zero regrets, uniform weights."""
    if n_experts < 1:
        raise ConfigurationError(f"need at least one expert, got {n_experts}")
    return MlpolState(
        regrets=np.zeros(n_experts),
        weights=np.full(n_experts, 1.0 / n_experts),
    )


def _weights_from_regrets(regrets: np.ndarray) -> np.ndarray:
    positive = np.maximum(regrets, 0.0)
    total = positive.sum()
    if total > 0.0:
        return positive / total
    # All positive parts vanish: uniform fallback, at any point in the stream.
    n = len(regrets)
    return np.full(n, 1.0 / n)


def aggregate(state: MlpolState, expert_preds: np.ndarray) -> float:
    """Weighted average of the expert predictions under the current weights."""
    preds = np.asarray(expert_preds, dtype=float)
    if preds.shape != state.weights.shape:
        raise ConfigurationError(
            f"{preds.shape[0] if preds.ndim == 1 else preds.shape} predictions "
            f"for {state.n_experts} experts"
        )
    return float(state.weights @ preds)


def observe(
    state: MlpolState, expert_preds: np.ndarray, agg_pred: float, y: float
) -> MlpolState:
    """Reveal the target, accumulate pseudo-regrets, recompute weights.

    ``agg_pred`` must be the aggregate produced by :func:`aggregate` with the
    same state and predictions (the engine guarantees this pairing). Weight
    recomputation happens here so a stale weight vector can never be used.

    Raises
    ------
    NumericalFailureError
        On non-finite predictions, aggregate, or target.
    """
    preds = np.asarray(expert_preds, dtype=float)
    if preds.shape != state.weights.shape:
        raise ConfigurationError(
            f"{preds.shape} predictions for {state.n_experts} experts"
        )
    if not (np.isfinite(preds).all() and np.isfinite(agg_pred) and np.isfinite(y)):
        raise NumericalFailureError("non-finite input to aggregation update")

    with np.errstate(over="ignore", invalid="ignore"):
        increments = 2.0 * (agg_pred - y) * (agg_pred - preds)
        regrets = state.regrets + increments
    if not np.isfinite(regrets).all():
        raise NumericalFailureError("pseudo-regret accumulation overflowed")
    return MlpolState(regrets=regrets, weights=_weights_from_regrets(regrets))


def weights(state: MlpolState) -> np.ndarray:
    """Copy of the current simplex weights (callers cannot mutate the state)."""
    return state.weights.copy()
