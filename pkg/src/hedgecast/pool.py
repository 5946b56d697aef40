"""The candidate pool: raw base passthroughs plus EWLS experts on a memory grid.

The pool exposes N = M + K per-step predictions: the M base predictions
unchanged, followed by K EWLS correction experts whose forgetting factors come
from a geometric grid in nominal memory scale h = 1/(1-gamma). Each EWLS
expert gets a covariance-inflation level from the power-law schedule
``epsilon_k = epsilon0 * (1 - gamma_k)**alpha`` (zero for the optional
no-forgetting endpoint gamma = 1).

During a cold-start window (default M + 5 steps) the EWLS entries output the
uniform mean of the base predictions while observations are buffered; at the
end of the window every expert is initialized by the exact discounted batch
solve on the buffer with its own gamma, and recursive updates take over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import experts
from .errors import ConfigurationError, NumericalFailureError, OutOfRangeError

__all__ = [
    "GridSpec",
    "PoolConfig",
    "ExpertPool",
    "build_grid",
    "nominal_scales",
    "inflation_schedule",
    "grid_covers",
    "clip_to_radius",
]


@dataclass(frozen=True)
class GridSpec:
    """Geometric grid of nominal memory scales, optionally plus gamma = 1.

    ``k_finite`` scales h_1 < ... < h_k are placed geometrically over
    [h_min, h_max] with ratio rho = (h_max/h_min)**(1/(k_finite-1)); the
    forgetting factors are gamma_k = 1 - 1/h_k. ``include_static`` appends the
    no-forgetting endpoint gamma = 1 outside the progression (it never counts
    toward coverage guarantees).
    """

    h_min: float
    h_max: float
    k_finite: int
    include_static: bool = False

    def __post_init__(self):
        if not (self.h_min >= 2.0):
            raise ConfigurationError(
                f"h_min must be >= 2 (got {self.h_min}); shorter memory breaks "
                "the gamma >= 1/2 requirement"
            )
        if not (self.h_max > self.h_min):
            raise ConfigurationError(
                f"h_max must exceed h_min, got [{self.h_min}, {self.h_max}]"
            )
        if not (isinstance(self.k_finite, (int, np.integer)) and self.k_finite >= 2):
            raise ConfigurationError(
                f"k_finite must be an integer >= 2, got {self.k_finite}"
            )

    @property
    def ratio(self) -> float:
        """Adjacent-scale ratio rho of the geometric progression."""
        return (self.h_max / self.h_min) ** (1.0 / (self.k_finite - 1))


def _grid_scales(spec: GridSpec) -> np.ndarray:
    # Geometric in log-space; endpoints pinned exactly to h_min / h_max.
    log_h = np.linspace(math.log(spec.h_min), math.log(spec.h_max), spec.k_finite)
    h = np.exp(log_h)
    h[0], h[-1] = spec.h_min, spec.h_max
    return h


def build_grid(spec: GridSpec) -> np.ndarray:
    """Forgetting factors of the grid, ascending, plus 1.0 if configured."""
    gammas = 1.0 - 1.0 / _grid_scales(spec)
    if spec.include_static:
        gammas = np.append(gammas, 1.0)
    return gammas


def nominal_scales(gammas: Sequence[float]) -> np.ndarray:
    """Memory scales h = 1/(1-gamma); inf for gamma = 1."""
    g = np.asarray(gammas, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(g >= 1.0, np.inf, 1.0 / (1.0 - g))


def inflation_schedule(
    gammas: Sequence[float], epsilon0: float, alpha: float = 1.0
) -> np.ndarray:
    """Per-expert inflation ``epsilon0 * (1-gamma)**alpha``; 0 at gamma = 1.

    With the default alpha = 1 the product epsilon_k * h_k equals epsilon0
    exactly for every finite-memory expert, so inflation injects the same total
    energy per nominal memory window across the grid.
    """
    if epsilon0 < 0:
        raise ConfigurationError(f"epsilon0 must be nonnegative, got {epsilon0}")
    g = np.asarray(gammas, dtype=float)
    eps = epsilon0 * (1.0 - g) ** alpha
    eps[g >= 1.0] = 0.0
    return eps


def grid_covers(spec: GridSpec, h_star: float) -> Tuple[int, float]:
    """Nearest finite grid point to ``h_star`` in log distance.

    Returns ``(index, ratio_gap)`` where ``ratio_gap = max(h_k/h*, h*/h_k)``
    for the nearest finite scale h_k. Geometric spacing guarantees
    ``ratio_gap <= sqrt(rho) <= rho``. The static endpoint never participates.

    Raises
    ------
    OutOfRangeError
        If ``h_star`` lies outside [h_min, h_max].
    """
    if not (spec.h_min <= h_star <= spec.h_max):
        raise OutOfRangeError(
            f"h_star={h_star} outside the grid range [{spec.h_min}, {spec.h_max}]"
        )
    h = _grid_scales(spec)
    idx = int(np.argmin(np.abs(np.log(h) - math.log(h_star))))
    ratio_gap = max(h[idx] / h_star, h_star / h[idx])
    return idx, float(ratio_gap)


def clip_to_radius(values: np.ndarray, radius: float) -> np.ndarray:
    """Coordinate-wise clip to [-radius, radius].

    Clipping never increases squared loss against any target inside the
    radius, so it is safe to apply to every pool entry.
    """
    return np.clip(values, -radius, radius)


@dataclass(frozen=True)
class PoolConfig:
    """Everything needed to build the N = M + K candidate pool.

    Exactly one of ``grid`` and ``gammas`` selects the EWLS experts: ``grid``
    for the normal geometric layout, ``gammas`` for explicit forgetting
    factors (single-expert standalone runs, or an empty tuple for a pool of
    raw base predictions only).
    """

    m_base: int
    grid: Optional[GridSpec] = None
    gammas: Optional[Tuple[float, ...]] = None
    delta0: float = 1e-3
    epsilon0: float = 1e-8
    alpha: float = 1.0
    clip_radius: Optional[float] = None
    coldstart_len: Optional[int] = None

    def __post_init__(self):
        if not (isinstance(self.m_base, (int, np.integer)) and self.m_base >= 1):
            raise ConfigurationError(
                f"m_base must be an integer >= 1, got {self.m_base}"
            )
        if (self.grid is None) == (self.gammas is None):
            raise ConfigurationError(
                "exactly one of grid / gammas must be provided"
            )
        if self.gammas is not None:
            for g in self.gammas:
                if not (0.5 <= g <= 1.0):
                    raise ConfigurationError(
                        f"explicit gamma {g} outside [0.5, 1]"
                    )
        if not (self.delta0 > 0):
            raise ConfigurationError(f"delta0 must be positive, got {self.delta0}")
        if self.epsilon0 < 0:
            raise ConfigurationError(f"epsilon0 must be nonnegative, got {self.epsilon0}")
        if self.clip_radius is not None and not (self.clip_radius > 0):
            raise ConfigurationError(
                f"clip_radius must be positive when set, got {self.clip_radius}"
            )
        if self.coldstart_len is not None and not (
            isinstance(self.coldstart_len, (int, np.integer)) and self.coldstart_len >= 1
        ):
            raise ConfigurationError(
                f"coldstart_len must be a positive integer, got {self.coldstart_len}"
            )

    def resolved_gammas(self) -> np.ndarray:
        if self.gammas is not None:
            return np.asarray(self.gammas, dtype=float)
        return build_grid(self.grid)

    def resolved_epsilons(self) -> np.ndarray:
        return inflation_schedule(self.resolved_gammas(), self.epsilon0, self.alpha)

    def resolved_coldstart(self) -> int:
        return self.coldstart_len if self.coldstart_len is not None else self.m_base + 5

    @property
    def dim(self) -> int:
        """Augmented input dimension d = m_base + 1."""
        return self.m_base + 1

    @property
    def k_experts(self) -> int:
        return len(self.resolved_gammas())

    @property
    def n_experts(self) -> int:
        return self.m_base + self.k_experts


class ExpertPool:
    """Sequentially owned pool state: EWLS experts plus the cold-start buffer.

    ``predict`` must be called before ``update`` for the same step (the engine
    enforces the ordering). The pool itself is unaware of the aggregation rule.
    """

    def __init__(self, config: PoolConfig):
        self.config = config
        self.gammas = config.resolved_gammas()
        self.epsilons = config.resolved_epsilons()
        self.scales = nominal_scales(self.gammas)
        self.coldstart_len = config.resolved_coldstart()
        self.expert_configs = [
            experts.EwlsConfig(
                gamma=float(g), delta0=config.delta0, epsilon=float(e), dim=config.dim
            )
            for g, e in zip(self.gammas, self.epsilons)
        ]
        self.states: Optional[list] = None  # None while cold-starting
        self._buffer: list = []
        self._step = 0
        if len(self.gammas) == 0:
            self.states = []  # no EWLS experts, nothing to cold-start

    @property
    def in_coldstart(self) -> bool:
        return self.states is None

    @property
    def k_experts(self) -> int:
        return len(self.gammas)

    @property
    def n_experts(self) -> int:
        return self.config.m_base + self.k_experts

    def predict(self, base_preds: np.ndarray) -> np.ndarray:
        """All N pool predictions for this step, clipped if configured.

        The first M entries are the raw base predictions; the next K are the
        EWLS expert predictions on the augmented input, or the uniform mean of
        the base predictions while the pool is still cold-starting.
        """
        base = np.asarray(base_preds, dtype=float)
        if base.shape != (self.config.m_base,):
            raise ConfigurationError(
                f"expected {self.config.m_base} base predictions, got shape {base.shape}"
            )
        if self.in_coldstart:
            ewls_part = np.full(self.k_experts, base.mean())
        else:
            z_aug = np.append(base, 1.0)
            ewls_part = np.array(
                [experts.predict(st, z_aug) for st in self.states]
            )
        out = np.concatenate([base, ewls_part])
        if self.config.clip_radius is not None:
            out = clip_to_radius(out, self.config.clip_radius)
        return out

    def update(self, base_preds: np.ndarray, y: float) -> None:
        """Reveal the target and advance every EWLS expert by one step.

        While cold-starting, the observation is buffered; once the buffer
        reaches the cold-start length each expert is initialized from the
        exact batch solve on the buffer with its own gamma. Afterwards each
        expert receives the recursive update with its own inflation level.

        Numerical failures are re-raised with the expert identity attached.
        """
        base = np.asarray(base_preds, dtype=float)
        z_aug = np.append(base, 1.0)
        step = self._step
        self._step += 1
        if self.k_experts == 0:
            return
        if self.in_coldstart:
            self._buffer.append((z_aug, float(y)))
            if len(self._buffer) >= self.coldstart_len:
                self._batch_initialize()
            return
        new_states = []
        for k, (st, cfg) in enumerate(zip(self.states, self.expert_configs)):
            try:
                new_states.append(experts.update(st, cfg, z_aug, y))
            except NumericalFailureError as exc:
                raise NumericalFailureError(
                    str(exc), step_index=step, expert=self._label(k)
                ) from exc
        self.states = new_states

    def _batch_initialize(self) -> None:
        states = []
        for k, cfg in enumerate(self.expert_configs):
            try:
                states.append(
                    experts.batch_ewls_state(self._buffer, cfg.gamma, cfg.delta0)
                )
            except NumericalFailureError as exc:
                raise NumericalFailureError(
                    str(exc), step_index=self._step - 1, expert=self._label(k)
                ) from exc
        self.states = states
        self._buffer = []

    def _label(self, k: int) -> str:
        g = self.gammas[k]
        return f"ewls[gamma={g:.6g}]"

    def coefficient_norms(self) -> Tuple[np.ndarray, np.ndarray]:
        """(full, slope) norms per EWLS expert; NaN while cold-starting."""
        if self.in_coldstart:
            nan = np.full(self.k_experts, np.nan)
            return nan, nan.copy()
        pairs = [experts.coefficient_norms(st) for st in self.states]
        if not pairs:
            empty = np.empty(0)
            return empty, empty.copy()
        full, slope = zip(*pairs)
        return np.array(full), np.array(slope)
