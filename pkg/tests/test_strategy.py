import numpy as np
import pytest

from deepfutures import strategy
from deepfutures.errors import ConfigError, DataError

SPEC = strategy.ContractSpec("XX", 1000.0, 900.0, 50.0)


def ts(n, start="2020-01-06T09:00:00", step_s=300):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(step_s, "s")


class TestSimulate:
    def test_hand_computed_pnl(self):
        prices = np.array([100.0, 101.0, 100.5])
        labels = np.array([1, -1])
        curve = strategy.simulate(ts(3), prices, labels, SPEC)
        assert curve.pnl.tolist() == [0.0, 50.0, 75.0]
        assert curve.positions.tolist() == [1, -1, -1]

    def test_flat_labels_flat_pnl(self):
        prices = np.array([100.0, 105.0, 95.0, 102.0])
        curve = strategy.simulate(ts(4), prices, np.zeros(3, dtype=int), SPEC)
        assert np.all(curve.pnl == 0.0)

    def test_pnl_starts_at_zero(self):
        prices = np.array([10.0, 11.0])
        curve = strategy.simulate(ts(2), prices, np.array([1]), SPEC)
        assert curve.pnl[0] == 0.0

    def test_misaligned_series_rejected(self):
        with pytest.raises(DataError, match="label"):
            strategy.simulate(ts(3), np.array([1.0, 2.0, 3.0]), np.array([1]), SPEC)

    def test_bad_labels_rejected(self):
        with pytest.raises(DataError):
            strategy.simulate(ts(2), np.array([1.0, 2.0]), np.array([2]), SPEC)

    def test_linear_in_contract_size(self):
        rng = np.random.default_rng(0)
        prices = 100.0 + np.cumsum(rng.normal(0, 1, 50))
        prices -= prices.min() - 1.0
        labels = rng.integers(-1, 2, 49)
        double = strategy.ContractSpec("XX", 1000.0, 900.0, 100.0)
        a = strategy.simulate(ts(50), prices, labels, SPEC)
        b = strategy.simulate(ts(50), prices, labels, double)
        assert np.array_equal(2.0 * a.pnl, b.pnl)

    def test_reversed_labels_negate_pnl(self):
        rng = np.random.default_rng(1)
        prices = 100.0 + np.cumsum(rng.normal(0, 1, 40))
        prices -= prices.min() - 1.0
        labels = rng.integers(-1, 2, 39)
        a = strategy.simulate(ts(40), prices, labels, SPEC)
        b = strategy.simulate(ts(40), prices, -labels, SPEC)
        assert np.array_equal(a.pnl, -b.pnl)

    def test_perfect_foresight_dominates_everywhere(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(5, 60))
            prices = 100.0 + np.cumsum(rng.normal(0, 1, n))
            prices -= prices.min() - 1.0
            labels = rng.integers(-1, 2, n - 1)
            timestamps = ts(n)
            predicted = strategy.simulate(timestamps, prices, labels, SPEC)
            perfect = strategy.simulate(
                timestamps, prices, strategy.perfect_foresight_labels(prices), SPEC
            )
            assert np.all(perfect.pnl >= predicted.pnl)

    def test_perfect_foresight_increments_are_abs_moves(self):
        prices = np.array([10.0, 12.0, 11.0, 11.0, 14.0])
        perfect = strategy.simulate(
            ts(5), prices, strategy.perfect_foresight_labels(prices), SPEC
        )
        increments = np.diff(perfect.pnl)
        expected = SPEC.contract_size * np.abs(np.diff(prices))
        assert np.array_equal(increments, expected)


class TestDailyReturns:
    def test_single_day(self):
        curve = strategy.EquityCurve(ts(3), np.zeros(3, int), np.array([0.0, 400.0, 1000.0]))
        days, rets = strategy.daily_returns(curve, 100_000.0)
        assert len(days) == 1
        assert rets.tolist() == [0.01]

    def test_flat_curve_zero_returns(self):
        stamps = np.concatenate([ts(3, "2020-01-06T09:00:00"), ts(3, "2020-01-07T09:00:00")])
        curve = strategy.EquityCurve(stamps, np.zeros(6, int), np.zeros(6))
        _, rets = strategy.daily_returns(curve, 100_000.0)
        assert rets.tolist() == [0.0, 0.0]

    def test_two_day_split(self):
        stamps = np.concatenate([ts(2, "2020-01-06T09:00:00"), ts(2, "2020-01-07T09:00:00")])
        pnl = np.array([0.0, 600.0, 800.0, 1000.0])
        curve = strategy.EquityCurve(stamps, np.zeros(4, int), pnl)
        days, rets = strategy.daily_returns(curve, 100_000.0)
        assert len(days) == 2
        assert np.allclose(rets, [0.006, 0.004])

    def test_quiet_day_still_counts(self):
        stamps = np.concatenate([
            ts(2, "2020-01-06T09:00:00"),
            ts(2, "2020-01-07T09:00:00"),
            ts(2, "2020-01-08T09:00:00"),
        ])
        pnl = np.array([0.0, 500.0, 500.0, 500.0, 500.0, 900.0])
        _, rets = strategy.daily_returns(curve := strategy.EquityCurve(
            stamps, np.zeros(6, int), pnl), 100_000.0)
        assert np.allclose(rets, [0.005, 0.0, 0.004])


class TestSharpe:
    def test_constant_returns_undefined(self):
        assert strategy.sharpe_annualized(np.full(10, 0.01)) is None

    def test_alternating_zero_mean(self):
        daily = np.array([0.01, -0.01] * 10)
        assert strategy.sharpe_annualized(daily) == 0.0

    def test_needs_two_days(self):
        with pytest.raises(DataError):
            strategy.sharpe_annualized(np.array([0.01]))

    def test_scales_with_sqrt_252(self):
        rng = np.random.default_rng(3)
        daily = rng.normal(0.001, 0.01, 100)
        expected = daily.mean() / daily.std(ddof=1) * np.sqrt(252)
        assert abs(strategy.sharpe_annualized(daily) - expected) < 1e-12


class TestCapabilityRatio:
    def test_zero_maps_to_zero(self):
        assert strategy.capability_ratio(0.0, 130) == 0.0

    def test_reference_consistency(self):
        # published Sharpe -> capability pairs at n = 130
        for sharpe, capability in ((3.29, 12.51), (2.07, 7.89), (1.48, 5.63),
                                   (1.29, 4.90), (1.11, 4.22)):
            assert abs(strategy.capability_ratio(sharpe, 130) - capability) <= 0.03

    def test_fixed_multiple_of_sharpe(self):
        ratio = strategy.capability_ratio(1.0, 130)
        assert abs(ratio - np.sqrt(130) / 3.0) < 1e-15


class TestMaxDrawdown:
    def test_monotone_increasing_is_zero(self):
        curve = strategy.EquityCurve(ts(4), np.zeros(4, int), np.array([0.0, 1.0, 2.0, 3.0]))
        assert strategy.max_drawdown(curve) == 0.0

    def test_hand_scan(self):
        assert strategy.max_drawdown(np.array([0.0, 10.0, 4.0, 12.0, 3.0])) == 9.0

    def test_all_zero(self):
        assert strategy.max_drawdown(np.zeros(5)) == 0.0

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        pnl = np.cumsum(rng.normal(0, 1, 100))
        shifted = strategy.max_drawdown(pnl + 1234.5)
        assert abs(strategy.max_drawdown(pnl) - shifted) < 1e-9


class TestBenchmarkCorrelation:
    def _days(self, n):
        return np.datetime64("2020-01-06", "D") + np.arange(n)

    def test_self_correlation_is_one(self):
        days = self._days(20)
        rets = np.random.default_rng(5).normal(0, 0.01, 20)
        assert abs(strategy.benchmark_correlation(days, rets, days, rets) - 1.0) < 1e-12

    def test_negation_is_minus_one(self):
        days = self._days(20)
        rets = np.random.default_rng(6).normal(0, 0.01, 20)
        corr = strategy.benchmark_correlation(days, rets, days, -rets)
        assert abs(corr + 1.0) < 1e-12

    def test_no_overlap_rejected(self):
        rets = np.zeros(5)
        with pytest.raises(DataError, match="overlap"):
            strategy.benchmark_correlation(self._days(5), rets, self._days(5) + 100, rets)

    def test_zero_variance_undefined(self):
        days = self._days(10)
        flat = np.zeros(10)
        noisy = np.random.default_rng(7).normal(0, 0.01, 10)
        assert strategy.benchmark_correlation(days, flat, days, noisy) is None

    def test_partial_overlap_uses_common_dates(self):
        rng = np.random.default_rng(8)
        a = rng.normal(0, 0.01, 10)
        b = rng.normal(0, 0.01, 10)
        full = strategy.benchmark_correlation(self._days(10), a, self._days(10), b)
        shifted = strategy.benchmark_correlation(
            self._days(10), a, self._days(10) + 5, b
        )  # 5 common days: different subset, still defined
        assert full is not None and shifted is not None


class TestEvaluateWindow:
    def test_metrics_shape(self):
        rng = np.random.default_rng(9)
        n = 288 * 5  # five synthetic days of 5-minute bars
        prices = 100.0 + np.cumsum(rng.normal(0, 0.5, n))
        prices -= prices.min() - 1.0
        labels = rng.integers(-1, 2, n - 1)
        curve = strategy.simulate(ts(n), prices, labels, SPEC)
        metrics = strategy.evaluate_window(curve, 100_000.0)
        assert metrics.n_days >= 5
        assert metrics.max_drawdown >= 0.0
        if metrics.sharpe is not None:
            expected = strategy.capability_ratio(metrics.sharpe, metrics.n_days)
            assert abs(metrics.capability - expected) < 1e-12

    def test_stats_aggregation_ignores_none(self):
        stats = strategy.MetricStats.of([1.0, None, 3.0])
        assert stats.mean == 2.0
        assert stats.max == 3.0
        empty = strategy.MetricStats.of([None, None])
        assert empty.mean is None


class TestTableIO:
    def test_contract_specs_round_trip(self, tmp_path):
        path = tmp_path / "contracts.csv"
        path.write_text(
            "symbol,initial_margin,maintenance_margin,contract_size\n"
            "PL,2090,1900,50\n"
            "AD,1980,1800,100000\n"
        )
        specs = strategy.read_contract_specs(path)
        assert specs["PL"].contract_size == 50.0
        assert specs["AD"].initial_margin == 1980.0

    def test_contract_specs_bad_value(self, tmp_path):
        path = tmp_path / "contracts.csv"
        path.write_text(
            "symbol,initial_margin,maintenance_margin,contract_size\nPL,x,1900,50\n"
        )
        with pytest.raises(DataError, match="line 2"):
            strategy.read_contract_specs(path)

    def test_contract_specs_nonpositive(self, tmp_path):
        with pytest.raises(ConfigError):
            strategy.ContractSpec("PL", 0.0, 1900.0, 50.0)

    def test_benchmark_returns(self, tmp_path):
        path = tmp_path / "bench.csv"
        path.write_text("date,return\n2020-01-06,0.01\n2020-01-07,-0.02\n")
        days, rets = strategy.read_benchmark_returns(path)
        assert len(days) == 2
        assert rets.tolist() == [0.01, -0.02]

    def test_benchmark_missing_header(self, tmp_path):
        path = tmp_path / "bench.csv"
        path.write_text("day,ret\n2020-01-06,0.01\n")
        with pytest.raises(DataError, match="header"):
            strategy.read_benchmark_returns(path)
