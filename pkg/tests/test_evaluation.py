import numpy as np
import pytest

from hedgecast import evaluation
from hedgecast.engine import run_stream, run_variant
from hedgecast.errors import DiagnosticError, ReportingError
from hedgecast.evaluation import (
    OVERALL,
    OVERALL_EXCL_WARMUP,
    PsiInputs,
    RegimeSpec,
    balancing_scale,
    build_eval_report,
    cumulative_regret_curve,
    hindsight_best_expert,
    hindsight_static_convex,
    path_length,
    per_expert_losses,
    project_to_simplex,
    psi_h,
    residual_correlation,
    rmse_by_regime,
    tracking_constants,
    weight_buckets,
)
from hedgecast.pool import PoolConfig

from conftest import make_stream


@pytest.fixture
def run(small_pool_config=None):
    config = PoolConfig(m_base=3, gammas=(0.9, 0.99), coldstart_len=5)
    return run_stream(make_stream(60, 3, seed=21), config)


class TestRmse:
    def test_hand_computed(self, run):
        regime = RegimeSpec("head", 0, 9)
        table = rmse_by_regime(run, [regime])
        losses = run.agg_losses()
        assert table["head"] == pytest.approx(np.sqrt(losses[:10].mean()))
        assert table[OVERALL] == pytest.approx(np.sqrt(losses.mean()))

    def test_exclude_warmup(self, run):
        table = rmse_by_regime(run, [], exclude_warmup=True)
        losses = run.agg_losses()[~run.warmup_mask()]
        assert table[OVERALL] == pytest.approx(np.sqrt(losses.mean()))

    def test_empty_regime_is_an_error(self, run):
        with pytest.raises(ReportingError) as excinfo:
            rmse_by_regime(run, [RegimeSpec("nowhere", 900, 999)])
        assert "nowhere" in str(excinfo.value)

    def test_reserved_names_rejected(self):
        from hedgecast.errors import ConfigurationError

        with pytest.raises(ConfigurationError):
            RegimeSpec(OVERALL, 0, 10)
        with pytest.raises(ConfigurationError):
            RegimeSpec(OVERALL_EXCL_WARMUP, 0, 10)


class TestHindsightBest:
    def test_smallest_index_wins_ties(self):
        idx, loss = hindsight_best_expert([3.0, 1.0, 1.0, 2.0])
        assert idx == 1
        assert loss == 1.0

    def test_matches_per_expert_losses(self, run):
        losses = per_expert_losses(run)
        idx, best = hindsight_best_expert(losses)
        matrix = run.expert_pred_matrix()
        manual = ((matrix - run.targets()[:, None]) ** 2).sum(axis=0)
        np.testing.assert_allclose(losses, manual)
        assert best == pytest.approx(manual.min())


class TestSimplexProjection:
    def test_identity_on_simplex_points(self, rng):
        for _ in range(20):
            v = rng.dirichlet(np.ones(5))
            np.testing.assert_allclose(project_to_simplex(v), v, atol=1e-12)

    def test_beats_random_simplex_points(self, rng):
        # Optimality oracle: the projection must be at least as close to v as
        # any of 2000 random feasible points.
        for _ in range(10):
            v = rng.normal(scale=3.0, size=4)
            x = project_to_simplex(v)
            assert x.min() >= -1e-12
            assert x.sum() == pytest.approx(1.0, abs=1e-12)
            candidates = rng.dirichlet(np.ones(4), size=2000)
            best = np.min(np.linalg.norm(candidates - v, axis=1))
            assert np.linalg.norm(x - v) <= best + 1e-9

    def test_known_values(self):
        np.testing.assert_allclose(
            project_to_simplex(np.array([2.0, 0.0])), [1.0, 0.0]
        )
        np.testing.assert_allclose(
            project_to_simplex(np.array([0.6, 0.6])), [0.5, 0.5]
        )


class TestStaticConvex:
    def test_matches_grid_scan_two_experts(self, rng):
        # Independent oracle: dense scan over the 1-D simplex.
        preds = rng.normal(size=(120, 2))
        y = 0.3 * preds[:, 0] + 0.7 * preds[:, 1] + 0.05 * rng.normal(size=120)
        result = hindsight_static_convex(preds, y)
        lam = np.linspace(0.0, 1.0, 20001)
        losses = np.array(
            [np.sum((l * preds[:, 0] + (1 - l) * preds[:, 1] - y) ** 2) for l in lam]
        )
        assert result.loss <= losses.min() + 1e-8
        assert result.converged

    def test_recovers_interior_optimum(self, rng):
        preds = rng.normal(size=(400, 3))
        w_true = np.array([0.2, 0.5, 0.3])
        y = preds @ w_true
        result = hindsight_static_convex(preds, y)
        np.testing.assert_allclose(result.weights, w_true, atol=1e-6)
        assert result.loss == pytest.approx(0.0, abs=1e-10)

    def test_single_expert_short_circuit(self, rng):
        preds = rng.normal(size=(50, 1))
        y = rng.normal(size=50)
        result = hindsight_static_convex(preds, y)
        np.testing.assert_array_equal(result.weights, [1.0])
        assert result.converged
        assert result.iterations == 0

    def test_budget_exhaustion_returns_not_raises(self, rng):
        preds = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        result = hindsight_static_convex(preds, y, tol=0.0, max_iter=3)
        assert not result.converged
        assert result.iterations == 3
        assert np.isfinite(result.loss)

    def test_weights_feasible(self, rng):
        preds = rng.normal(size=(80, 5))
        y = rng.normal(size=80)
        result = hindsight_static_convex(preds, y)
        assert result.weights.min() >= -1e-12
        assert result.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_regret_curve_endpoint(run):
    matrix = run.expert_pred_matrix()
    static = hindsight_static_convex(matrix, run.targets())
    curve = cumulative_regret_curve(run, static.weights)
    agg_total = run.agg_losses().sum()
    static_total = np.sum((matrix @ static.weights - run.targets()) ** 2)
    assert curve[-1] == pytest.approx(agg_total - static_total)
    assert len(curve) == len(run)


class TestWeightBuckets:
    def test_partition_sums_to_one(self):
        config = PoolConfig(
            m_base=2, gammas=(0.98, 0.995, 0.9995, 1.0), coldstart_len=4
        )
        result = run_stream(make_stream(40, 2, seed=3), config)
        series = weight_buckets(result)
        total = series.fast + series.medium + series.slow + series.base
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_bucket_edges_partition_scales(self):
        # h = 50 (fast), 200 (medium), 2000 and inf (slow).
        config = PoolConfig(
            m_base=2, gammas=(0.98, 0.995, 0.9995, 1.0), coldstart_len=4
        )
        result = run_stream(make_stream(40, 2, seed=3), config)
        series = weight_buckets(result)
        w = result.weight_matrix()
        np.testing.assert_allclose(series.fast, w[:, 2])
        np.testing.assert_allclose(series.medium, w[:, 3])
        np.testing.assert_allclose(series.slow, w[:, 4] + w[:, 5])
        np.testing.assert_allclose(series.base, w[:, :2].sum(axis=1))

    def test_base_only_runs_have_pure_base_mass(self):
        config = PoolConfig(m_base=2, gammas=(0.9,), coldstart_len=3)
        result = run_variant(make_stream(20, 2, seed=1), config, "base_only")
        series = weight_buckets(result)
        np.testing.assert_allclose(series.base, 1.0)
        assert series.fast.max() == 0.0


class TestResidualCorrelation:
    def test_shared_error_component_detected(self, rng):
        T = 400
        signal = np.sin(0.1 * np.arange(T))
        shared = rng.normal(size=T)
        base = np.stack(
            [signal + 0.8 * shared + 0.2 * rng.normal(size=T) for _ in range(3)],
            axis=1,
        )
        corr, mean_off = residual_correlation(base, signal, segment_len=T)
        assert mean_off > 0.8
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)

    def test_zero_variance_column_reported(self, rng):
        base = rng.normal(size=(50, 3))
        y = base[:, 0].copy()  # residual of column 1 is exactly zero
        with pytest.raises(DiagnosticError) as excinfo:
            residual_correlation(base, y, segment_len=50)
        assert "column 0" in str(excinfo.value)

    def test_single_base_has_nan_mean(self, rng):
        base = rng.normal(size=(50, 1))
        corr, mean_off = residual_correlation(base, rng.normal(size=50), 50)
        assert corr.shape == (1, 1)
        assert np.isnan(mean_off)


class TestTrackingProxy:
    def test_hand_value(self):
        inputs = PsiInputs(delta=1, R=1, D=1, B_z=1, d=1, T=100, h=10, P=1)
        # 1 + log(11) + 20 + 44 = 67.3978952728...
        assert psi_h(inputs) == pytest.approx(1 + np.log(11.0) + 20.0 + 44.0)

    def test_constants(self):
        c1, c2 = tracking_constants(R=2.0, B_z=3.0, D=1.5)
        assert c1 == pytest.approx(2 * 1.5**2)
        assert c2 == pytest.approx(8 * 2.0 * 9.0)

    def test_balancing_scale_matches_grid_scan(self):
        c1, c2 = tracking_constants(R=1.2, B_z=0.8, D=2.0)
        d, T, P = 4, 5000, 3.7
        h_star = balancing_scale(d, T, P, c1, c2)
        hs = np.exp(np.linspace(np.log(h_star / 50), np.log(h_star * 50), 200001))
        objective = c1 * d * T / hs + c2 * hs * P
        assert h_star == pytest.approx(hs[np.argmin(objective)], rel=1e-4)
        # Closed-form minimum value 2 sqrt(c1 c2 d T P).
        assert objective.min() == pytest.approx(
            2 * np.sqrt(c1 * c2 * d * T * P), rel=1e-6
        )

    def test_balancing_scale_infinite_without_drift(self):
        c1, c2 = tracking_constants(1, 1, 1)
        assert balancing_scale(3, 100, 0.0, c1, c2) == float("inf")


def test_path_length_hand_case():
    path = np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 4.0], [6.0, 8.0]])
    assert path_length(path) == pytest.approx(10.0)
    assert path_length(np.zeros((1, 2))) == 0.0


class TestEvalReport:
    def test_structure_and_hindsight_rows(self):
        config = PoolConfig(m_base=3, gammas=(0.9, 0.99), coldstart_len=5)
        stream = make_stream(60, 3, seed=21)
        results = {
            "combined": run_variant(stream, config, "combined"),
            "base_only": run_variant(stream, config, "base_only"),
        }
        regimes = (RegimeSpec("head", 0, 29), RegimeSpec("tail", 30, 59))
        report = build_eval_report(results, regimes)
        assert report.columns == ["head", "tail", OVERALL, OVERALL_EXCL_WARMUP]
        assert report.row_order[:2] == ["combined", "base_only"]
        hindsight_rows = [r for r in report.row_order if report.hindsight[r]]
        assert any(r.startswith("hindsight_best_expert") for r in hindsight_rows)
        assert "hindsight_static_convex" in hindsight_rows
        d = report.to_dict()
        assert [r["name"] for r in d["rows"]] == report.row_order

    def test_regime_lengths_recorded(self, run):
        report = build_eval_report(
            {"combined": run}, (RegimeSpec("head", 0, 9),)
        )
        assert report.regime_lengths["head"] == 10
        assert report.regime_lengths[OVERALL] == 60
