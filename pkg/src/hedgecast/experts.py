"""Single exponentially weighted least-squares (EWLS) correction expert.

One expert maintains a time-varying affine map from base predictions to the
target: a coefficient vector over the augmented input ``z_aug = (z, 1)`` whose
last coordinate is the intercept. Estimation is ridge-regularized least squares
with geometrically decaying sample weights (forgetting factor ``gamma``),
computed recursively as forgetting-factor RLS with an optional isotropic
covariance inflation term added each step.

The recursion keeps the inverse Gram ("covariance") matrix ``P``. With zero
inflation, ``P`` equals the exact inverse of the discounted regularized Gram
matrix, and the recursive coefficients match the direct batch solve
(:func:`batch_ewls`) to floating-point accuracy — a property the test suite
leans on heavily.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, NumericalFailureError

__all__ = [
    "EwlsConfig",
    "EwlsState",
    "initial_state",
    "predict",
    "update",
    "batch_ewls",
    "batch_ewls_state",
    "coefficient_norms",
]


@dataclass(frozen=True)
class EwlsConfig:
    """Static parameters of one EWLS expert.

    Parameters
    ----------
    gamma : float
        Forgetting factor in [0.5, 1]. A sample ``a`` steps old carries weight
        ``gamma**a``; the nominal memory scale is ``1 / (1 - gamma)``.
    delta0 : float
        Diffuse-prior scale. The prior covariance is ``(1/delta0) * I``, which
        is equivalent to an L2 ridge penalty of strength ``delta0`` in the
        batch problem.
    epsilon : float
        Nonnegative isotropic covariance inflation added after each update.
        Zero makes the recursion exactly equal to the batch solve.
    dim : int
        Dimension of the augmented input (number of base predictions + 1
        intercept coordinate). Must be >= 2.
    """

    gamma: float
    delta0: float
    epsilon: float
    dim: int

    def __post_init__(self):
        if not (0.5 <= self.gamma <= 1.0):
            raise ConfigurationError(f"gamma must lie in [0.5, 1], got {self.gamma}")
        if not (self.delta0 > 0):
            raise ConfigurationError(f"delta0 must be positive, got {self.delta0}")
        if not (self.epsilon >= 0):
            raise ConfigurationError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 2):
            raise ConfigurationError(f"dim must be an integer >= 2, got {self.dim}")

    @property
    def nominal_scale(self) -> float:
        """Implied memory length in steps: ``1/(1-gamma)``; inf for gamma=1."""
        return float("inf") if self.gamma >= 1.0 else 1.0 / (1.0 - self.gamma)


@dataclass
class EwlsState:
    """Mutable state of one expert: coefficients, covariance, step counter.

    ``w`` has the intercept in its last coordinate. ``P`` is kept symmetric by
    explicit symmetrization after each update; with ``epsilon == 0`` it equals
    the inverse of the discounted regularized Gram matrix.
    """

    w: np.ndarray
    P: np.ndarray
    steps_seen: int = 0


def initial_state(config: EwlsConfig) -> EwlsState:
    """Fresh state: zero coefficients and diffuse prior covariance I/delta0."""
    d = config.dim
    return EwlsState(
        w=np.zeros(d),
        P=np.eye(d) / config.delta0,
        steps_seen=0,
    )


def predict(state: EwlsState, z_aug: np.ndarray) -> float:
    """Prediction ``z_aug @ w`` using the current (pre-update) coefficients.

    ``z_aug`` is the augmented input with the intercept coordinate (= 1 by
    convention) last. Raises :class:`ConfigurationError` on length mismatch.
    """
    z_aug = np.asarray(z_aug, dtype=float)
    if z_aug.shape != state.w.shape:
        raise ConfigurationError(
            f"input has shape {z_aug.shape}, expected {state.w.shape}"
        )
    return float(z_aug @ state.w)


def update(state: EwlsState, config: EwlsConfig, z_aug: np.ndarray, y: float) -> EwlsState:
    """One forgetting-factor RLS step; returns the new state.

    The update is the standard rank-one recursion

    .. code-block:: text

        s = gamma + z' P z
        K = P z / s
        w <- w + K (y - z' w)
        P <- (P - (P z)(P z)'/s) / gamma + epsilon * I

    followed by symmetrization ``P <- (P + P') / 2`` to stop floating-point
    drift from breaking positive-definiteness checks.

    Raises
    ------
    NumericalFailureError
        If any intermediate turns non-finite; carries the 0-based step index.
    """
    z_aug = np.asarray(z_aug, dtype=float)
    if z_aug.shape != state.w.shape:
        raise ConfigurationError(
            f"input has shape {z_aug.shape}, expected {state.w.shape}"
        )

    P = state.P
    # Overflow here is reported as NumericalFailureError below, not as a
    # numpy warning.
    with np.errstate(over="ignore", invalid="ignore"):
        Pz = P @ z_aug
        s = config.gamma + float(z_aug @ Pz)
        gain = Pz / s
        innovation = y - float(z_aug @ state.w)
        w_new = state.w + gain * innovation

        P_new = (P - np.outer(Pz, Pz) / s) / config.gamma
        if config.epsilon > 0.0:
            P_new = P_new + config.epsilon * np.eye(len(z_aug))
        P_new = (P_new + P_new.T) / 2.0

    if not (np.isfinite(w_new).all() and np.isfinite(P_new).all() and np.isfinite(s)):
        raise NumericalFailureError(
            "non-finite state after RLS update", step_index=state.steps_seen
        )

    return EwlsState(w=w_new, P=P_new, steps_seen=state.steps_seen + 1)


def _discounted_system(
    history: Sequence[Tuple[np.ndarray, float]], gamma: float, delta0: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Discounted regularized Gram matrix and moment vector for the batch problem."""
    if len(history) == 0:
        raise ConfigurationError("batch EWLS requires a non-empty history")
    z0 = np.asarray(history[0][0], dtype=float)
    d = z0.shape[0]
    n = len(history)
    A = (gamma ** n) * delta0 * np.eye(d)
    b = np.zeros(d)
    for i, (z_aug, y) in enumerate(history):
        z = np.asarray(z_aug, dtype=float)
        if z.shape != (d,):
            raise ConfigurationError(
                f"history entry {i} has shape {z.shape}, expected ({d},)"
            )
        wgt = gamma ** (n - 1 - i)
        A += wgt * np.outer(z, z)
        b += wgt * float(y) * z
    return A, b


def batch_ewls(
    history: Sequence[Tuple[np.ndarray, float]], gamma: float, delta0: float
) -> np.ndarray:
    """Direct solve of the discounted ridge problem; the recursion's reference.

    Minimizes ``sum_s gamma**(n-s) * (y_s - w @ z_s)**2 + gamma**n * delta0 * ||w||**2``
    over the ``n`` observations in ``history`` (1-based ``s``, most recent
    sample weighted 1). Serves as the independent oracle for the recursive
    update and as the cold-start initializer.

    Raises
    ------
    NumericalFailureError
        If the regularized system is numerically singular anyway.
    """
    A, b = _discounted_system(history, gamma, delta0)
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - requires pathological input
        raise NumericalFailureError(f"singular discounted system: {exc}") from exc


def batch_ewls_state(
    history: Sequence[Tuple[np.ndarray, float]], gamma: float, delta0: float
) -> EwlsState:
    """Batch-initialized state: coefficients plus exact inverse Gram as ``P``."""
    A, b = _discounted_system(history, gamma, delta0)
    try:
        P = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalFailureError(f"singular discounted system: {exc}") from exc
    P = (P + P.T) / 2.0
    return EwlsState(w=P @ b, P=P, steps_seen=len(history))


def coefficient_norms(state: EwlsState) -> Tuple[float, float]:
    """(full, slope) Euclidean norms of the coefficient vector.

    ``full`` includes the intercept; ``slope`` drops the last (intercept)
    coordinate. Used by the bounded-iterate diagnostic, which tracks the two
    norms separately.
    """
    full = float(np.linalg.norm(state.w))
    slope = float(np.linalg.norm(state.w[:-1]))
    return full, slope
