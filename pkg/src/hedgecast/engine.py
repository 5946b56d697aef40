"""Causal predict-then-update loop over a chronological stream.

Each step forms the augmented input, collects pool predictions, aggregates
them with the current MLpol weights, records everything, and only then reveals
the target to the experts and the aggregator. The loop is strictly sequential
and contains no randomness, so identical inputs produce bitwise-identical
records.

Three variants share the loop:

- ``combined``  — MLpol over all N = M + K pool entries,
- ``base_only`` — MLpol over the M raw base predictions (no EWLS machinery),
- ``ewls_only`` — MLpol over the K EWLS experts, which still consume the base
  predictions as features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Union

import datetime as _dt

import numpy as np

from . import aggregation
from .errors import ConfigurationError, IngestionError, NumericalFailureError
from .pool import ExpertPool, PoolConfig

__all__ = ["Observation", "RunRecord", "RunResult", "run_stream", "run_variant", "VARIANTS"]

VARIANTS = ("base_only", "ewls_only", "combined")

Timestamp = Union[int, _dt.date]


@dataclass(frozen=True)
class Observation:
    """One time step: timestamp, realized target, base-prediction vector."""

    timestamp: Timestamp
    y: float
    z: np.ndarray


@dataclass
class RunRecord:
    """Per-step log. ``weights`` are the pre-update weights actually used, so
    ``agg_pred == weights @ expert_preds`` holds at every step; the coefficient
    norms are likewise the pre-update values that produced the predictions."""

    timestamp: Timestamp
    expert_preds: np.ndarray
    agg_pred: float
    y: float
    weights: np.ndarray
    ewls_full_norms: np.ndarray
    ewls_slope_norms: np.ndarray
    warmup: bool


class RunResult(Sequence):
    """Sequence of :class:`RunRecord` plus the pool layout metadata needed by
    the evaluation stage (bucket assignment, expert labels, warm-up length)."""

    def __init__(self, records: List[RunRecord], *, variant: str, m_base: int,
                 gammas: np.ndarray, scales: np.ndarray, coldstart_len: int):
        self.records = records
        self.variant = variant
        self.m_base = m_base
        self.gammas = gammas
        self.scales = scales
        self.coldstart_len = coldstart_len

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    @property
    def n_active(self) -> int:
        """Number of experts the aggregator ran over in this variant."""
        return len(self.records[0].weights) if self.records else 0

    def expert_labels(self) -> List[str]:
        base = [f"base_{i + 1}" for i in range(self.m_base)]
        ewls = [f"ewls_gamma_{g:.10g}" for g in self.gammas]
        if self.variant == "base_only":
            return base
        if self.variant == "ewls_only":
            return ewls
        return base + ewls

    def timestamps(self) -> list:
        return [r.timestamp for r in self.records]

    def targets(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    def agg_preds(self) -> np.ndarray:
        return np.array([r.agg_pred for r in self.records])

    def agg_losses(self) -> np.ndarray:
        """Per-step squared losses of the aggregate prediction."""
        return (self.agg_preds() - self.targets()) ** 2

    def expert_pred_matrix(self) -> np.ndarray:
        """T x n_active matrix of the per-step expert predictions."""
        return np.array([r.expert_preds for r in self.records])

    def weight_matrix(self) -> np.ndarray:
        return np.array([r.weights for r in self.records])

    def warmup_mask(self) -> np.ndarray:
        return np.array([r.warmup for r in self.records], dtype=bool)


def _validate_stream(stream: Sequence[Observation], m_base: int) -> None:
    if not stream:
        raise IngestionError("empty stream: at least one observation is required")
    prev_ts = None
    for i, obs in enumerate(stream):
        z = np.asarray(obs.z, dtype=float)
        if z.shape != (m_base,):
            raise IngestionError(
                f"expected {m_base} base predictions, got shape {z.shape}", row=i
            )
        if not (np.isfinite(obs.y) and np.isfinite(z).all()):
            raise IngestionError("non-finite value in stream", row=i)
        if prev_ts is not None:
            try:
                ok = obs.timestamp > prev_ts
            except TypeError as exc:
                raise IngestionError(
                    f"mixed timestamp types: {type(prev_ts).__name__} then "
                    f"{type(obs.timestamp).__name__}", row=i
                ) from exc
            if not ok:
                raise IngestionError(
                    f"timestamps must be strictly increasing "
                    f"({prev_ts!r} then {obs.timestamp!r})", row=i
                )
        prev_ts = obs.timestamp


def run_variant(
    stream: Sequence[Observation], config: PoolConfig, variant: str
) -> RunResult:
    """Run the causal loop and return the per-step records.

    Raises
    ------
    IngestionError
        On non-increasing timestamps or non-finite inputs (with row index).
    NumericalFailureError
        On an aborted run; the partial records are attached as ``.records``.
    """
    if variant not in VARIANTS:
        raise ConfigurationError(
            f"unknown variant {variant!r}; expected one of {VARIANTS}"
        )
    stream = list(stream)
    _validate_stream(stream, config.m_base)

    if variant == "base_only":
        # No EWLS machinery at all: identical, record-for-record, to a combined
        # run whose pool has zero EWLS experts.
        pool_config = PoolConfig(
            m_base=config.m_base,
            gammas=(),
            delta0=config.delta0,
            epsilon0=config.epsilon0,
            alpha=config.alpha,
            clip_radius=config.clip_radius,
            coldstart_len=config.coldstart_len,
        )
    else:
        pool_config = config
    pool = ExpertPool(pool_config)

    m = config.m_base
    if variant == "base_only":
        n_active = m
    elif variant == "ewls_only":
        n_active = pool.k_experts
        if n_active == 0:
            raise ConfigurationError("ewls_only variant needs at least one EWLS expert")
    else:
        n_active = pool.n_experts

    agg_state = aggregation.initial_state(n_active)
    coldstart_len = pool.coldstart_len
    records: List[RunRecord] = []

    for step, obs in enumerate(stream):
        z = np.asarray(obs.z, dtype=float)
        pool_preds = pool.predict(z)
        active = pool_preds[m:] if variant == "ewls_only" else pool_preds
        agg_pred = aggregation.aggregate(agg_state, active)
        full_norms, slope_norms = pool.coefficient_norms()
        records.append(
            RunRecord(
                timestamp=obs.timestamp,
                expert_preds=active.copy(),
                agg_pred=agg_pred,
                y=float(obs.y),
                weights=aggregation.weights(agg_state),
                ewls_full_norms=full_norms,
                ewls_slope_norms=slope_norms,
                warmup=step < coldstart_len,
            )
        )
        try:
            agg_state = aggregation.observe(agg_state, active, agg_pred, obs.y)
            pool.update(z, obs.y)
        except NumericalFailureError as exc:
            if exc.step_index is None:
                exc.step_index = step
            exc.records = records
            raise

    return RunResult(
        records,
        variant=variant,
        m_base=m,
        gammas=pool.gammas.copy(),
        scales=pool.scales.copy(),
        coldstart_len=coldstart_len,
    )


def run_stream(stream: Sequence[Observation], config: PoolConfig) -> RunResult:
    """The full pipeline (combined variant): base pool + EWLS experts + MLpol."""
    return run_variant(stream, config, "combined")
