"""Paired moving-block bootstrap over per-step squared-loss sequences.

Per replicate and regime, block starts are drawn from a deterministic
counter-based stream keyed by (seed, replicate, regime) — never by method —
so every method is resampled with the same blocks ("paired"), replicates can
run in any order, and permuting the method map changes nothing. Point
estimates are the plain deterministic RMSEs of the input sequences, so they
match the evaluation tables exactly.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, IngestionError

__all__ = [
    "BootstrapConfig",
    "BootstrapReport",
    "MethodInterval",
    "DeltaInterval",
    "resample_indices",
    "paired_bootstrap",
    "percentile",
]


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, block lengths, and the master seed.

    ``block_len_overrides`` maps regime names to block lengths; regimes not
    listed use ``block_len_default``. The default override shortens blocks on
    a regime named "lockdown", matching the usual short-regime adjustment.
    """

    replicates: int = 10_000
    block_len_default: int = 14
    block_len_overrides: Mapping[str, int] = field(
        default_factory=lambda: {"lockdown": 7}
    )
    seed: int = 0
    levels: Tuple[float, float] = (0.025, 0.975)

    def __post_init__(self):
        if not (isinstance(self.replicates, (int, np.integer)) and self.replicates >= 1):
            raise ConfigurationError(f"replicates must be >= 1, got {self.replicates}")
        if self.block_len_default < 1:
            raise ConfigurationError(
                f"block length must be >= 1, got {self.block_len_default}"
            )
        for name, b in self.block_len_overrides.items():
            if b < 1:
                raise ConfigurationError(f"block length for {name!r} must be >= 1, got {b}")
        lo, hi = self.levels
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigurationError(f"levels must satisfy 0 <= lo < hi <= 1, got {self.levels}")

    def block_len_for(self, regime_name: str) -> int:
        return int(self.block_len_overrides.get(regime_name, self.block_len_default))


def percentile(samples: Sequence[float], q: float) -> float:
    """Empirical quantile with linear interpolation between order statistics.

    The convention, fixed bit-exactly: for sorted values x_0..x_{n-1}, the
    quantile at level q sits at fractional rank ``r = q*(n-1)`` and equals
    ``x_floor(r) + (r - floor(r)) * (x_floor(r)+1 - x_floor(r))``. q=0 gives
    the minimum, q=1 the maximum.
    """
    arr = np.sort(np.asarray(samples, dtype=float))
    if arr.size == 0:
        raise ConfigurationError("percentile of empty sample")
    if not (0.0 <= q <= 1.0):
        raise ConfigurationError(f"quantile level must be in [0, 1], got {q}")
    rank = q * (arr.size - 1)
    lo = int(math.floor(rank))
    if lo >= arr.size - 1:
        return float(arr[-1])
    frac = rank - lo
    return float(arr[lo] + frac * (arr[lo + 1] - arr[lo]))


def resample_indices(
    regime_len: int, block_len: int, rng: np.random.Generator
) -> np.ndarray:
    """One moving-block resample of 0-based indices, length ``regime_len``.

    Draws ceil(L/B) block starts uniformly from the valid start set
    {0, ..., L-B}, concatenates the length-B blocks, and truncates to L.
    ``block_len == regime_len`` degenerates to the identity permutation;
    ``block_len == 1`` is i.i.d. index resampling with replacement.
    """
    if not (1 <= block_len <= regime_len):
        raise ConfigurationError(
            f"block length {block_len} not in [1, regime length {regime_len}]"
        )
    n_blocks = -(-regime_len // block_len)  # ceil
    starts = rng.integers(0, regime_len - block_len + 1, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_len)[None, :]).ravel()
    return idx[:regime_len]


def _replicate_rng(seed: int, replicate: int, regime_name: str) -> np.random.Generator:
    # Counter-based stream keyed by (seed, replicate, regime): order-independent
    # and platform-stable (crc32 of the regime name is part of the key).
    regime_key = zlib.crc32(regime_name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=(seed, replicate, regime_key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class MethodInterval:
    method: str
    regime: str
    point: float
    lo: float
    hi: float


@dataclass
class DeltaInterval:
    method: str
    regime: str
    point: float
    lo: float
    hi: float
    significant: bool


@dataclass
class BootstrapReport:
    """Per-method RMSE intervals and paired RMSE differences vs. the anchor.

    ``deltas`` holds ``rmse(method) - rmse(anchor)`` per regime: positive
    values mean the anchor is better. ``significant`` flags intervals that
    exclude zero.
    """

    anchor: str
    levels: Tuple[float, float]
    intervals: List[MethodInterval]
    deltas: List[DeltaInterval]
    replicates: int

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor,
            "levels": list(self.levels),
            "replicates": self.replicates,
            "rmse": [vars(i).copy() for i in self.intervals],
            "delta_rmse": [vars(d).copy() for d in self.deltas],
        }


def paired_bootstrap(
    loss_sequences: Mapping[str, np.ndarray],
    regimes: Mapping[str, np.ndarray],
    config: BootstrapConfig,
    anchor: Optional[str] = None,
) -> BootstrapReport:
    """Paired moving-block bootstrap of per-regime RMSEs and differences.

    Parameters
    ----------
    loss_sequences : mapping
        Method name -> per-step squared losses, all aligned on the same steps
        (identical lengths; the caller is responsible for timestamp
        alignment).
    regimes : mapping
        Regime name -> integer indices into the loss arrays. Include an
        "overall" entry covering every step if an overall row is wanted; it is
        resampled as its own regime with its own block length.
    config : BootstrapConfig
    anchor : str, optional
        Method the differences are taken against; defaults to the first key.

    Returns
    -------
    BootstrapReport
        Point RMSEs equal the deterministic values bitwise. Differences are
        formed per replicate (paired draws), then summarized by percentiles.
    """
    if not loss_sequences:
        raise ConfigurationError("no loss sequences supplied")
    methods = list(loss_sequences)
    arrays = {}
    length = None
    for name in methods:
        arr = np.asarray(loss_sequences[name], dtype=float)
        if arr.ndim != 1:
            raise IngestionError(f"loss sequence {name!r} is not 1-dimensional")
        if length is None:
            length = arr.size
        elif arr.size != length:
            raise IngestionError(
                f"loss sequence {name!r} has length {arr.size}, expected {length}"
            )
        if not np.isfinite(arr).all():
            raise IngestionError(f"loss sequence {name!r} contains non-finite values")
        if (arr < 0).any():
            raise IngestionError(f"loss sequence {name!r} contains negative losses")
        arrays[name] = arr
    if anchor is None:
        anchor = methods[0]
    elif anchor not in arrays:
        raise ConfigurationError(f"anchor {anchor!r} not among the methods")

    lo_q, hi_q = config.levels
    intervals: List[MethodInterval] = []
    deltas: List[DeltaInterval] = []

    for regime_name, raw_idx in regimes.items():
        idx = np.asarray(raw_idx, dtype=int)
        if idx.size == 0:
            raise ConfigurationError(f"regime {regime_name!r} selects no steps")
        if idx.min() < 0 or idx.max() >= length:
            raise ConfigurationError(
                f"regime {regime_name!r} indexes outside the loss sequences"
            )
        block = config.block_len_for(regime_name)
        if block > idx.size:
            raise ConfigurationError(
                f"block length {block} exceeds regime {regime_name!r} "
                f"length {idx.size}"
            )
        regime_losses = {m: arrays[m][idx] for m in methods}
        L = idx.size

        # Replicate RMSE matrix, methods x replicates; draws keyed only by
        # (seed, replicate, regime) so every method sees the same blocks.
        rep = np.empty((len(methods), config.replicates))
        for r in range(config.replicates):
            rng = _replicate_rng(config.seed, r, regime_name)
            take = resample_indices(L, block, rng)
            for mi, m in enumerate(methods):
                rep[mi, r] = math.sqrt(regime_losses[m][take].mean())

        points = {m: math.sqrt(regime_losses[m].mean()) for m in methods}
        for mi, m in enumerate(methods):
            intervals.append(
                MethodInterval(
                    method=m,
                    regime=regime_name,
                    point=points[m],
                    lo=percentile(rep[mi], lo_q),
                    hi=percentile(rep[mi], hi_q),
                )
            )
        ai = methods.index(anchor)
        for mi, m in enumerate(methods):
            if m == anchor:
                continue
            diff = rep[mi] - rep[ai]
            lo = percentile(diff, lo_q)
            hi = percentile(diff, hi_q)
            deltas.append(
                DeltaInterval(
                    method=m,
                    regime=regime_name,
                    point=points[m] - points[anchor],
                    lo=lo,
                    hi=hi,
                    significant=bool(lo > 0.0 or hi < 0.0),
                )
            )

    return BootstrapReport(
        anchor=anchor,
        levels=config.levels,
        intervals=intervals,
        deltas=deltas,
        replicates=config.replicates,
    )
