import math

import numpy as np
import pytest

from hedgecast.bootstrap import (
    BootstrapConfig,
    _replicate_rng,
    paired_bootstrap,
    percentile,
    resample_indices,
)
from hedgecast.errors import ConfigurationError, IngestionError


@pytest.fixture
def two_methods(rng):
    T = 300
    losses_a = rng.uniform(0.0, 4.0, size=T)
    losses_b = losses_a * rng.uniform(0.5, 0.9, size=T)  # b clearly better
    regimes = {
        "head": np.arange(0, 150),
        "tail": np.arange(150, 300),
        "overall": np.arange(T),
    }
    return {"a": losses_a, "b": losses_b}, regimes


class TestPercentile:
    def test_matches_numpy_linear_convention(self, rng):
        # Rank q*(n-1) with linear interpolation is numpy's default.
        for _ in range(25):
            xs = rng.normal(size=rng.integers(1, 60))
            q = float(rng.uniform())
            assert percentile(xs, q) == pytest.approx(
                float(np.quantile(xs, q)), rel=1e-12, abs=1e-12
            )

    def test_hand_values(self):
        xs = [4.0, 1.0, 3.0, 2.0]
        assert percentile(xs, 0.0) == 1.0
        assert percentile(xs, 1.0) == 4.0
        assert percentile(xs, 0.5) == 2.5  # rank 1.5 between 2 and 3

    def test_invalid_inputs(self):
        with pytest.raises(ConfigurationError):
            percentile([], 0.5)
        with pytest.raises(ConfigurationError):
            percentile([1.0], 1.5)


class TestResampleIndices:
    def test_lengths_and_ranges(self, rng):
        for L, B in ((10, 3), (14, 14), (100, 7), (5, 2)):
            idx = resample_indices(L, B, np.random.default_rng(0))
            assert idx.shape == (L,)
            assert idx.min() >= 0 and idx.max() < L

    def test_blocks_are_contiguous(self):
        L, B = 20, 5
        idx = resample_indices(L, B, np.random.default_rng(3))
        for start in range(0, L, B):
            block = idx[start : start + B]
            np.testing.assert_array_equal(np.diff(block), 1)

    def test_block_equal_to_length_is_degenerate(self):
        # ceil(L/B) = 1 start drawn from {0}: the identity permutation.
        idx = resample_indices(12, 12, np.random.default_rng(9))
        np.testing.assert_array_equal(idx, np.arange(12))

    def test_truncation_keeps_prefix(self):
        L, B = 10, 4  # 3 blocks of 4, truncated to 10
        rng_a = np.random.default_rng(5)
        idx = resample_indices(L, B, rng_a)
        rng_b = np.random.default_rng(5)
        starts = rng_b.integers(0, L - B + 1, size=3)
        full = np.concatenate([np.arange(s, s + B) for s in starts])
        np.testing.assert_array_equal(idx, full[:L])


def test_replicate_rng_is_self_contained():
    # Draws are keyed by (seed, replicate, regime) only, so replicate 7 gives
    # the same stream no matter how many replicates run before or after it.
    a = _replicate_rng(0, 7, "lockdown").integers(0, 1000, size=8)
    b = _replicate_rng(0, 7, "lockdown").integers(0, 1000, size=8)
    np.testing.assert_array_equal(a, b)
    c = _replicate_rng(0, 7, "post").integers(0, 1000, size=8)
    assert not np.array_equal(a, c)
    d = _replicate_rng(1, 7, "lockdown").integers(0, 1000, size=8)
    assert not np.array_equal(a, d)


class TestPairedBootstrap:
    def test_point_estimates_are_deterministic_rmse(self, two_methods):
        losses, regimes = two_methods
        config = BootstrapConfig(replicates=50, block_len_default=10)
        report = paired_bootstrap(losses, regimes, config)
        for interval in report.intervals:
            expected = math.sqrt(losses[interval.method][regimes[interval.regime]].mean())
            assert interval.point == expected  # bitwise

    def test_identical_methods_give_zero_width_delta(self, two_methods):
        losses, regimes = two_methods
        same = {"x": losses["a"], "y": losses["a"].copy()}
        config = BootstrapConfig(replicates=100, block_len_default=10)
        report = paired_bootstrap(same, regimes, config)
        for delta in report.deltas:
            assert delta.point == 0.0
            assert delta.lo == 0.0 and delta.hi == 0.0
            assert not delta.significant

    def test_deterministic_given_seed(self, two_methods):
        losses, regimes = two_methods
        config = BootstrapConfig(replicates=60, block_len_default=10, seed=42)
        r1 = paired_bootstrap(losses, regimes, config)
        r2 = paired_bootstrap(losses, regimes, config)
        assert r1.to_dict() == r2.to_dict()

    def test_anchor_defaults_to_first_method(self, two_methods):
        losses, regimes = two_methods
        config = BootstrapConfig(replicates=40, block_len_default=10)
        report = paired_bootstrap(losses, regimes, config)
        assert report.anchor == "a"
        # b is uniformly better, so b - a must be negative and significant.
        for delta in report.deltas:
            assert delta.method == "b"
            assert delta.point < 0
            assert delta.hi < 0
            assert delta.significant

    def test_explicit_anchor_flips_sign(self, two_methods):
        losses, regimes = two_methods
        config = BootstrapConfig(replicates=40, block_len_default=10)
        report = paired_bootstrap(losses, regimes, config, anchor="b")
        for delta in report.deltas:
            assert delta.method == "a"
            assert delta.point > 0

    def test_per_regime_block_override_changes_draws(self, two_methods):
        losses, regimes = two_methods
        base = BootstrapConfig(replicates=30, block_len_default=10)
        override = BootstrapConfig(
            replicates=30, block_len_default=10, block_len_overrides={"head": 3}
        )
        r_base = paired_bootstrap(losses, regimes, base)
        r_override = paired_bootstrap(losses, regimes, override)
        head_base = [i for i in r_base.intervals if i.regime == "head"]
        head_over = [i for i in r_override.intervals if i.regime == "head"]
        assert any(
            a.lo != b.lo or a.hi != b.hi for a, b in zip(head_base, head_over)
        )
        tail_base = [i for i in r_base.intervals if i.regime == "tail"]
        tail_over = [i for i in r_override.intervals if i.regime == "tail"]
        for a, b in zip(tail_base, tail_over):
            assert a.lo == b.lo and a.hi == b.hi

    def test_misaligned_lengths_rejected(self, two_methods):
        losses, regimes = two_methods
        bad = {"a": losses["a"], "b": losses["b"][:-1]}
        with pytest.raises(IngestionError):
            paired_bootstrap(bad, regimes, BootstrapConfig(replicates=5))

    def test_negative_and_nonfinite_losses_rejected(self, two_methods):
        losses, regimes = two_methods
        config = BootstrapConfig(replicates=5, block_len_default=10)
        neg = {"a": losses["a"].copy()}
        neg["a"][3] = -1.0
        with pytest.raises(IngestionError):
            paired_bootstrap(neg, regimes, config)
        inf = {"a": losses["a"].copy()}
        inf["a"][3] = np.inf
        with pytest.raises(IngestionError):
            paired_bootstrap(inf, regimes, config)

    def test_block_longer_than_regime_rejected(self, two_methods):
        losses, regimes = two_methods
        config = BootstrapConfig(replicates=5, block_len_default=200)
        with pytest.raises(ConfigurationError):
            paired_bootstrap(losses, {"head": regimes["head"]}, config)

    def test_unknown_anchor_rejected(self, two_methods):
        losses, regimes = two_methods
        with pytest.raises(ConfigurationError):
            paired_bootstrap(losses, regimes, BootstrapConfig(replicates=5), anchor="zz")

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            BootstrapConfig(replicates=0)
        with pytest.raises(ConfigurationError):
            BootstrapConfig(block_len_default=0)
        with pytest.raises(ConfigurationError):
            BootstrapConfig(levels=(0.9, 0.1))
