import numpy as np
import pytest

from hedgecast import experts, pool
from hedgecast.errors import ConfigurationError, NumericalFailureError, OutOfRangeError
from hedgecast.pool import ExpertPool, GridSpec, PoolConfig


class TestGrid:
    def test_endpoints_exact(self):
        spec = GridSpec(h_min=20.0, h_max=5000.0, k_finite=15)
        gammas = pool.build_grid(spec)
        assert gammas[0] == 0.95
        assert gammas[-1] == 0.9998
        assert len(gammas) == 15

    def test_geometric_spacing(self):
        spec = GridSpec(h_min=20.0, h_max=5000.0, k_finite=15)
        scales = pool.nominal_scales(pool.build_grid(spec))
        ratios = scales[1:] / scales[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
        assert ratios[0] == pytest.approx((5000.0 / 20.0) ** (1.0 / 14.0))

    def test_static_appended_outside_progression(self):
        spec = GridSpec(h_min=20.0, h_max=5000.0, k_finite=15, include_static=True)
        gammas = pool.build_grid(spec)
        assert len(gammas) == 16
        assert gammas[-1] == 1.0
        assert gammas[-2] == 0.9998

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            GridSpec(h_min=1.5, h_max=100.0, k_finite=5)
        with pytest.raises(ConfigurationError):
            GridSpec(h_min=20.0, h_max=20.0, k_finite=5)
        with pytest.raises(ConfigurationError):
            GridSpec(h_min=20.0, h_max=100.0, k_finite=1)

    def test_inflation_keeps_epsilon_times_scale_constant(self):
        spec = GridSpec(h_min=20.0, h_max=5000.0, k_finite=15, include_static=True)
        gammas = pool.build_grid(spec)
        eps = pool.inflation_schedule(gammas, epsilon0=1e-8, alpha=1.0)
        finite = gammas < 1.0
        np.testing.assert_allclose(
            eps[finite] / (1.0 - gammas[finite]), 1e-8, rtol=1e-12
        )
        assert eps[-1] == 0.0

    def test_inflation_alpha_exponent(self):
        gammas = np.array([0.9, 0.99])
        eps = pool.inflation_schedule(gammas, epsilon0=1e-6, alpha=2.0)
        np.testing.assert_allclose(eps, [1e-6 * 0.1**2, 1e-6 * 0.01**2])

    def test_grid_covers_nearest_in_log_distance(self):
        spec = GridSpec(h_min=10.0, h_max=1000.0, k_finite=3)  # 10, 100, 1000
        idx, gap = pool.grid_covers(spec, 95.0)
        assert idx == 1
        assert gap == pytest.approx(100.0 / 95.0)
        idx, _ = pool.grid_covers(spec, 10.0)
        assert idx == 0

    def test_grid_covers_out_of_range(self):
        spec = GridSpec(h_min=10.0, h_max=1000.0, k_finite=3)
        with pytest.raises(OutOfRangeError):
            pool.grid_covers(spec, 5.0)
        with pytest.raises(OutOfRangeError):
            pool.grid_covers(spec, 2000.0)


class TestPoolConfig:
    def test_exactly_one_source_of_gammas(self):
        with pytest.raises(ConfigurationError):
            PoolConfig(m_base=2)
        with pytest.raises(ConfigurationError):
            PoolConfig(
                m_base=2,
                grid=GridSpec(h_min=10, h_max=100, k_finite=3),
                gammas=(0.9,),
            )

    def test_explicit_gamma_range_checked(self):
        with pytest.raises(ConfigurationError):
            PoolConfig(m_base=2, gammas=(0.4,))
        with pytest.raises(ConfigurationError):
            PoolConfig(m_base=2, gammas=(1.0001,))

    def test_coldstart_default_tracks_base_count(self):
        config = PoolConfig(m_base=4, gammas=(0.9,))
        assert config.resolved_coldstart() == 9
        config = PoolConfig(m_base=4, gammas=(0.9,), coldstart_len=3)
        assert config.resolved_coldstart() == 3

    def test_counts(self):
        config = PoolConfig(
            m_base=3, grid=GridSpec(h_min=10, h_max=100, k_finite=4, include_static=True)
        )
        assert config.dim == 4
        assert config.k_experts == 5
        assert config.n_experts == 8

    def test_empty_gammas_allowed(self):
        config = PoolConfig(m_base=3, gammas=())
        assert config.k_experts == 0
        assert config.n_experts == 3


class TestExpertPool:
    def test_coldstart_outputs_uniform_base_mean(self):
        config = PoolConfig(m_base=2, gammas=(0.9, 0.99), coldstart_len=3)
        p = ExpertPool(config)
        preds = p.predict(np.array([1.0, 3.0]))
        np.testing.assert_allclose(preds, [1.0, 3.0, 2.0, 2.0])
        assert p.in_coldstart

    def test_batch_initialization_matches_closed_form(self, rng):
        config = PoolConfig(m_base=2, gammas=(0.9, 0.99), coldstart_len=4)
        p = ExpertPool(config)
        history = []
        for _ in range(4):
            z = rng.standard_normal(2)
            y = float(rng.standard_normal())
            z_aug = np.append(z, 1.0)
            history.append((z_aug, y))
            p.update(z, y)
        assert not p.in_coldstart
        for k, gamma in enumerate((0.9, 0.99)):
            expected = experts.batch_ewls_state(history, gamma, config.delta0)
            np.testing.assert_allclose(p.states[k].w, expected.w, rtol=1e-10)
            np.testing.assert_allclose(p.states[k].P, expected.P, rtol=1e-10)

    def test_post_coldstart_updates_are_recursive(self, rng):
        # After the batch init the pool must walk in lockstep with a manual
        # recursion that uses the configured inflation.
        config = PoolConfig(m_base=2, gammas=(0.95,), coldstart_len=3, epsilon0=1e-6)
        p = ExpertPool(config)
        econfig = p.expert_configs[0]
        assert econfig.epsilon == pytest.approx(1e-6 * 0.05)
        history = []
        for t in range(10):
            z = rng.standard_normal(2)
            y = float(rng.standard_normal())
            history.append((np.append(z, 1.0), y))
            p.update(z, y)
        shadow = experts.batch_ewls_state(history[:3], 0.95, config.delta0)
        for z_aug, y in history[3:]:
            shadow = experts.update(shadow, econfig, z_aug, y)
        np.testing.assert_allclose(p.states[0].w, shadow.w, rtol=1e-10)

    def test_clipping_applies_to_all_entries(self):
        config = PoolConfig(m_base=2, gammas=(0.9,), coldstart_len=2, clip_radius=1.0)
        p = ExpertPool(config)
        preds = p.predict(np.array([5.0, -3.0]))
        np.testing.assert_allclose(preds, [1.0, -1.0, 1.0])

    def test_zero_expert_pool_passes_base_through(self):
        config = PoolConfig(m_base=2, gammas=())
        p = ExpertPool(config)
        preds = p.predict(np.array([1.0, 2.0]))
        np.testing.assert_allclose(preds, [1.0, 2.0])
        p.update(np.array([1.0, 2.0]), 1.5)  # must be a no-op, not an error

    def test_failure_carries_expert_label(self):
        config = PoolConfig(m_base=1, gammas=(0.9,), coldstart_len=1)
        p = ExpertPool(config)
        p.update(np.array([1.0]), 1.0)
        with pytest.raises(NumericalFailureError) as excinfo:
            p.update(np.array([1.0]), float("inf"))
        assert "0.9" in str(excinfo.value.expert)

    def test_coefficient_norms_nan_during_coldstart(self):
        config = PoolConfig(m_base=2, gammas=(0.9,), coldstart_len=5)
        p = ExpertPool(config)
        full, slope = p.coefficient_norms()
        assert np.isnan(full).all() and np.isnan(slope).all()
