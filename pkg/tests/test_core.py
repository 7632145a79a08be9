import numpy as np
import pytest

from feedsim.core import (
    EconomyParams,
    ImpactTable,
    MetricImpact,
    QoPVector,
    discounted_value,
    lt_impact_of_changes,
    profit,
    qop_delta_to_lt,
)


@pytest.fixture
def impacts():
    return ImpactTable.default()


@pytest.fixture
def economy():
    return EconomyParams.default()


class TestDiscountedValue:
    def test_zero_rate_identity(self):
        assert discounted_value([100.0], 0.0) == 100.0

    def test_single_period_algebra(self):
        assert discounted_value([110.0], 0.10) == pytest.approx(100.0, abs=1e-12)

    def test_matches_term_by_term_oracle(self):
        flows = [50.0, 50.0, 50.0]
        r = 0.05
        expected = 0.0  # independent loop-sum oracle
        for t, d in enumerate(flows, start=1):
            expected += d / (1.0 + r) ** t
        assert discounted_value(flows, r) == pytest.approx(expected, abs=1e-12)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            discounted_value([1.0], 1.0)
        with pytest.raises(ValueError):
            discounted_value([1.0], -0.1)

    def test_zero_rate_equals_plain_sum(self):
        rng = np.random.default_rng(0)
        flows = rng.uniform(0, 100, 10).tolist()
        assert discounted_value(flows, 0.0) == pytest.approx(sum(flows), rel=1e-12)

    def test_strictly_decreasing_in_rate(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            flows = rng.uniform(1, 50, 5).tolist()
            r1, r2 = sorted(rng.uniform(0, 0.9, 2))
            if r1 == r2:
                continue
            assert discounted_value(flows, r2) < discounted_value(flows, r1)


class TestQopDeltaToLt:
    def test_identical_is_zero(self, impacts):
        q = QoPVector(first_frame_ms=500.0, rebuffer_ratio=0.02, fps=30.0)
        assert qop_delta_to_lt(q, q, impacts).value == 0.0

    def test_first_frame_one_percent_improvement(self, impacts):
        # Table-anchored coefficient: 1% faster first frame is +0.00023 of LT
        before = QoPVector(first_frame_ms=1000.0)
        after = QoPVector(first_frame_ms=990.0)
        assert qop_delta_to_lt(before, after, impacts).value == pytest.approx(0.00023, abs=1e-12)

    def test_two_metrics_opposite_directions(self, impacts):
        before = QoPVector(rebuffer_ratio=0.02, fps=30.0)
        after = QoPVector(rebuffer_ratio=0.022, fps=33.0)
        # spreadsheet oracle: rebuffer +10% hurts, fps +10% helps
        expected = -0.00015 * 10.0 + 0.00021 * 10.0
        assert qop_delta_to_lt(before, after, impacts).value == pytest.approx(expected, abs=1e-12)

    def test_zero_baseline_metric_is_skipped_and_flagged(self, impacts):
        before = QoPVector(temperature_c=0.0)
        after = QoPVector(temperature_c=10.0)
        res = qop_delta_to_lt(before, after, impacts)
        assert res.value == 0.0
        assert "temperature_c" in res.skipped

    def test_sensitivity_weights_scale_contributions(self, impacts):
        before = QoPVector(rebuffer_ratio=0.02)
        after = QoPVector(rebuffer_ratio=0.03)
        base = qop_delta_to_lt(before, after, impacts).value
        weighted = qop_delta_to_lt(before, after, impacts, sens={"rebuffer_ratio": 2.0}).value
        assert weighted == pytest.approx(2.0 * base, rel=1e-12)

    def test_antisymmetry_to_first_order(self, impacts):
        # exact antisymmetry cannot hold for before-referenced relative
        # changes; at small changes the asymmetry is second order
        rng = np.random.default_rng(2)
        for _ in range(50):
            base = QoPVector(
                first_frame_ms=500.0, rebuffer_ratio=0.02, fps=30.0, cpu_pct=0.3
            )
            factor = 1.0 + rng.uniform(-0.05, 0.05)
            moved = QoPVector(
                first_frame_ms=500.0 * factor,
                rebuffer_ratio=min(0.02 * factor, 1.0),
                fps=30.0 * factor,
                cpu_pct=min(0.3 * factor, 1.0),
            )
            fwd = qop_delta_to_lt(base, moved, impacts).value
            bwd = qop_delta_to_lt(moved, base, impacts).value
            mag = max(abs(fwd), abs(bwd), 1e-15)
            assert abs(fwd + bwd) <= 0.06 * mag + 1e-15


class TestProfit:
    def test_null_change_fails_gate(self, economy):
        res = profit(0.0, 0.0, 0.0, economy)
        assert res.profit == 0.0
        assert not res.passes_gate

    def test_pure_cost_saving_passes(self, economy):
        res = profit(0.0, 0.0, -10.0, economy)
        assert res.profit == pytest.approx(10.0)
        assert res.passes_gate

    def test_roi_hand_algebra(self, economy):
        # one extra lifetime day at half a day's revenue in cost
        cost = economy.arpu_base / 2.0
        res = profit(1.0, 0.0, cost, economy)
        expected_profit = economy.arpu_base - cost
        assert res.profit == pytest.approx(expected_profit, rel=1e-12)
        assert res.roi == pytest.approx(expected_profit / cost, rel=1e-12)

    def test_gate_requires_roi_above_gamma(self):
        params = EconomyParams(lt_base=100.0, arpu_base=0.05, roi_gamma=3.0, discount_rate_r=0.0)
        res = profit(1.0, 0.0, 0.03, params)  # profit 0.02, roi < 1
        assert res.profit > 0
        assert not res.passes_gate

    def test_linearity_superposition(self, economy):
        rng = np.random.default_rng(3)
        for _ in range(40):
            a = rng.uniform(-2, 2, 3)
            b = rng.uniform(-2, 2, 3)
            p_sum = profit(a[0] + b[0], a[1] + b[1], a[2] + b[2], economy).profit
            p_parts = profit(*a, economy).profit + profit(*b, economy).profit
            assert p_sum == pytest.approx(p_parts, rel=1e-9, abs=1e-12)


class TestTypes:
    def test_qop_fraction_bounds(self):
        with pytest.raises(ValueError):
            QoPVector(rebuffer_ratio=1.2)
        with pytest.raises(ValueError):
            QoPVector(first_frame_ms=-1.0)

    def test_economy_validation(self):
        with pytest.raises(ValueError):
            EconomyParams(lt_base=0.0, arpu_base=0.05, roi_gamma=1.0, discount_rate_r=0.0)
        with pytest.raises(ValueError):
            EconomyParams(lt_base=1.0, arpu_base=0.05, roi_gamma=1.0, discount_rate_r=1.0)

    def test_impact_table_covers_every_metric(self):
        with pytest.raises(ValueError):
            ImpactTable({"fps": MetricImpact(0.1, True)})

    def test_impact_table_rejects_unknown_metric(self):
        full = ImpactTable.default().to_config()
        full["not_a_metric"] = {"coefficient": 0.1, "increase_helps": True}
        with pytest.raises(ValueError):
            ImpactTable.from_config(full)

    def test_config_roundtrip(self):
        table = ImpactTable.default()
        again = ImpactTable.from_config(table.to_config())
        assert again.impacts == table.impacts
        assert again.not_available == table.not_available

    def test_lt_impact_of_changes_ignores_unpriced(self):
        table = ImpactTable.default()
        assert lt_impact_of_changes({"traffic_bytes": 50.0}, table) == 0.0
