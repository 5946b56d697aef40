"""Deterministic, seedable generator of regime-shift prediction streams.

A scenario is a latent signal observed by M imperfect base predictors (their
errors cross-correlated to a controllable degree), plus a target that follows
a segment-wise affine combination of the base predictions: per segment a
coefficient vector, an optional instantaneous level shift on the intercept,
and an optional linear within-segment coefficient drift. The realized
coefficient path is returned alongside the stream so path-length and tracking
diagnostics have ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .engine import Observation
from .errors import ConfigurationError

__all__ = [
    "SegmentSpec",
    "ScenarioSpec",
    "generate",
    "level_shift_scenario",
    "two_phase_drift_scenario",
]


@dataclass(frozen=True)
class SegmentSpec:
    """One regime segment: length, affine coefficients, drift, level shift.

    ``coeffs`` has dimension m_base + 1 with the intercept last. ``drift_rate``
    is the per-step Euclidean movement of the coefficient vector along a fixed
    (seed-determined) unit direction; ``level_shift`` is added to the intercept
    for the whole segment (an instantaneous break at the boundary).
    """

    length: int
    coeffs: Tuple[float, ...]
    drift_rate: float = 0.0
    level_shift: float = 0.0

    def __post_init__(self):
        if self.length < 1:
            raise ConfigurationError(f"segment length must be >= 1, got {self.length}")
        if self.drift_rate < 0:
            raise ConfigurationError(
                f"drift_rate must be nonnegative, got {self.drift_rate}"
            )


@dataclass(frozen=True)
class ScenarioSpec:
    """Full scenario description; generation is deterministic per seed."""

    T: int
    m_base: int
    segments: Tuple[SegmentSpec, ...]
    noise_sd: float = 0.02
    base_error_sd: float = 0.25
    base_error_corr: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.m_base < 1:
            raise ConfigurationError(f"m_base must be >= 1, got {self.m_base}")
        if not self.segments:
            raise ConfigurationError("at least one segment is required")
        total = sum(s.length for s in self.segments)
        if total != self.T:
            raise ConfigurationError(
                f"segment lengths sum to {total}, expected T={self.T}"
            )
        d = self.m_base + 1
        for i, seg in enumerate(self.segments):
            if len(seg.coeffs) != d:
                raise ConfigurationError(
                    f"segment {i} has {len(seg.coeffs)} coefficients, expected {d}"
                )
        if self.noise_sd < 0 or self.base_error_sd < 0:
            raise ConfigurationError("noise levels must be nonnegative")
        c = self.base_error_corr
        lower = -1.0 if self.m_base == 1 else -1.0 / (self.m_base - 1)
        if not (lower <= c <= 1.0):
            raise ConfigurationError(
                f"base_error_corr={c} outside the feasible range "
                f"[{lower:.6g}, 1] for {self.m_base} base predictors"
            )

    @property
    def dim(self) -> int:
        return self.m_base + 1


def _equicorrelated_factor(m: int, corr: float) -> np.ndarray:
    """Symmetric square root of the equicorrelation matrix (1-c)I + c 11'."""
    if m == 1:
        return np.ones((1, 1))
    cov = (1.0 - corr) * np.eye(m) + corr * np.ones((m, m))
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def _coefficient_path(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim
    path = np.empty((spec.T, d))
    # Drift directions are drawn first so the rest of the stream is unaffected
    # by how many segments drift.
    directions = []
    for seg in spec.segments:
        u = rng.standard_normal(d)
        directions.append(u / np.linalg.norm(u))
    t0 = 0
    for seg, u in zip(spec.segments, directions):
        base = np.asarray(seg.coeffs, dtype=float).copy()
        base[-1] += seg.level_shift
        offsets = np.arange(seg.length)[:, None] * seg.drift_rate * u[None, :]
        path[t0 : t0 + seg.length] = base[None, :] + offsets
        t0 += seg.length
    return path


def generate(spec: ScenarioSpec) -> Tuple[List[Observation], np.ndarray]:
    """Generate the stream and the realized coefficient path.

    Returns ``(stream, comparator_path)`` where the stream has integer
    timestamps 0..T-1 and ``comparator_path`` is the T x (m_base+1) coefficient
    matrix that actually produced the targets.
    """
    rng = np.random.default_rng(spec.seed)
    path = _coefficient_path(spec, rng)

    # Latent signal: slow seasonal component plus a persistent AR(1).
    t_axis = np.arange(spec.T)
    seasonal = 0.8 * np.sin(2.0 * np.pi * t_axis / 120.0)
    shocks = rng.standard_normal(spec.T)
    ar = np.empty(spec.T)
    level = 0.0
    for t in range(spec.T):
        level = 0.97 * level + 0.25 * shocks[t]
        ar[t] = level
    signal = seasonal + ar

    factor = _equicorrelated_factor(spec.m_base, spec.base_error_corr)
    raw_errors = rng.standard_normal((spec.T, spec.m_base))
    errors = spec.base_error_sd * (raw_errors @ factor.T)
    base_preds = signal[:, None] + errors

    target_noise = spec.noise_sd * rng.standard_normal(spec.T)
    z_aug = np.column_stack([base_preds, np.ones(spec.T)])
    targets = np.einsum("td,td->t", z_aug, path) + target_noise

    stream = [
        Observation(timestamp=int(t), y=float(targets[t]), z=base_preds[t].copy())
        for t in range(spec.T)
    ]
    return stream, path


def level_shift_scenario(
    T: int = 750,
    m_base: int = 4,
    shift: float = -0.15,
    shift_start: int = 450,
    shift_len: int = 150,
    noise_sd: float = 0.02,
    base_error_sd: float = 0.25,
    base_error_corr: float = 0.3,
    seed: int = 11,
) -> ScenarioSpec:
    """Abrupt break: stable regime, a level-shifted window, then recovery.

    Mimics a lockdown-style break — the target drops by ``shift`` (in target
    units, default -0.15 of the ~1.0 scale) for ``shift_len`` steps while the
    base predictions are unaware of it.
    """
    if not (0 < shift_start and shift_start + shift_len <= T):
        raise ConfigurationError("shift window must fit inside the stream")
    coeffs = tuple([1.0 / m_base] * m_base + [0.0])
    shifted = SegmentSpec(shift_len, coeffs, level_shift=shift)
    segments = [SegmentSpec(shift_start, coeffs), shifted]
    tail = T - shift_start - shift_len
    if tail > 0:
        segments.append(SegmentSpec(tail, coeffs))
    return ScenarioSpec(
        T=T,
        m_base=m_base,
        segments=tuple(segments),
        noise_sd=noise_sd,
        base_error_sd=base_error_sd,
        base_error_corr=base_error_corr,
        seed=seed,
    )


def two_phase_drift_scenario(
    stable_len: int = 400,
    drift_len: int = 350,
    m_base: int = 3,
    drift_rate: float = 0.02,
    noise_sd: float = 0.05,
    base_error_sd: float = 0.25,
    base_error_corr: float = 0.2,
    seed: int = 23,
) -> ScenarioSpec:
    """Stable phase followed by steady coefficient drift.

    The canonical trade-off scenario: long memory wins while the coefficients
    hold still, short memory wins once they start moving.
    """
    coeffs = tuple([1.0 / m_base] * m_base + [0.0])
    return ScenarioSpec(
        T=stable_len + drift_len,
        m_base=m_base,
        segments=(
            SegmentSpec(stable_len, coeffs),
            SegmentSpec(drift_len, coeffs, drift_rate=drift_rate),
        ),
        noise_sd=noise_sd,
        base_error_sd=base_error_sd,
        base_error_corr=base_error_corr,
        seed=seed,
    )
