import numpy as np
import pytest

from banditalloc.environment import AllocationEvent
from banditalloc.metrics import (
    cumulative_regret,
    disparity,
    fairness_ratios,
    greedy_feasible_actions,
    oracle_reward,
    per_capita_outcomes,
)


def truth(rows):
    return np.asarray(rows, dtype=float)


class TestOracleReward:
    def test_empty_snapshot(self):
        assert oracle_reward([], {0: 5}, truth([[0.5]])) == 0.0

    def test_single_pair(self):
        assert oracle_reward([(0, 0)], {0: 5}, truth([[0.7]])) == pytest.approx(0.7)

    def test_capacity_one_takes_the_best(self):
        # one individual, three resources, per-round rule allows only one
        means = truth([[0.9, 0.5, 0.1]])
        eligible = [(0, 0), (0, 1), (0, 2)]
        assert oracle_reward(eligible, {0: 9, 1: 9, 2: 9}, means) == pytest.approx(0.9)
        assert greedy_feasible_actions(eligible, {0: 9, 1: 9, 2: 9}, means) == [(0, 0)]

    def test_budget_binds(self):
        means = truth([[0.9], [0.8], [0.7]])
        eligible = [(0, 0), (1, 0), (2, 0)]
        actions = greedy_feasible_actions(eligible, {0: 2}, means)
        assert actions == [(0, 0), (1, 0)]

    def test_nonpositive_means_skipped(self):
        means = truth([[0.5], [-0.2]])
        actions = greedy_feasible_actions([(0, 0), (1, 0)], {0: 9}, means)
        assert actions == [(0, 0)]

    def test_greedy_dominates_any_singleton(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n, r = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            means = rng.uniform(0.05, 1.0, size=(n, r))
            eligible = [(i, j) for i in range(n) for j in range(r)]
            budgets = {j: int(rng.integers(1, 4)) for j in range(r)}
            best_single = max(float(means[i][j]) for i, j in eligible)
            assert oracle_reward(eligible, budgets, means) >= best_single - 1e-12


class TestCumulativeRegret:
    def test_matching_traces_zero_curve(self):
        y = np.array([0.5, 0.2, 0.9])
        curve = cumulative_regret(y, y)
        np.testing.assert_array_equal(curve.cum_regret, np.zeros(3))

    def test_constant_gap(self):
        curve = cumulative_regret(np.zeros(10), np.ones(10))
        assert curve.final_regret == pytest.approx(10.0)
        np.testing.assert_allclose(curve.cum_regret, np.arange(1, 11))

    def test_spreadsheet_expansion(self):
        rng = np.random.default_rng(1)
        policy_y = rng.uniform(size=7)
        oracle_y = rng.uniform(size=7)
        curve = cumulative_regret(policy_y, oracle_y, seed=3)
        expected = []
        run = 0.0
        for p, o in zip(policy_y, oracle_y):
            run += o - p
            expected.append(run)
        np.testing.assert_allclose(curve.cum_regret, expected)
        assert curve.seed == 3

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cumulative_regret(np.zeros(5), np.zeros(6))


class TestFairnessRatios:
    def test_parity(self):
        log = [0] * 5 + [1] * 5
        report = fairness_ratios(log, {0: 10, 1: 10})
        assert [row[3] for row in report.rows] == [1.0, 1.0]

    def test_formula_arithmetic(self):
        log = [0] * 8 + [1] * 2
        report = fairness_ratios(log, {0: 10, 1: 10})
        assert report.ratio_of(0) == pytest.approx(1.6)
        assert report.ratio_of(1) == pytest.approx(0.4)

    def test_weighted_mean_is_exactly_one(self):
        rng = np.random.default_rng(2)
        sizes = {0: 13, 1: 7, 2: 21}
        log = [int(g) for g in rng.choice([0, 1, 2], size=40, p=[0.6, 0.3, 0.1])]
        report = fairness_ratios(log, sizes)
        population = sum(sizes.values())
        weighted = sum(sizes[g] / population * ratio for g, _, _, ratio in report.rows)
        assert weighted == pytest.approx(1.0, abs=1e-12)

    def test_zero_group_size_rejected(self):
        with pytest.raises(ValueError):
            fairness_ratios([0], {0: 0, 1: 5})

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            fairness_ratios([], {0: 5})

    def test_accepts_events(self):
        events = [
            AllocationEvent(round=1, individual=0, resource=0, group=1,
                            base_reward=0.5, predicted_reward=0.0, drawn_cooldown=1)
        ]
        report = fairness_ratios(events, {0: 2, 1: 2}, regime="delayed")
        assert report.regime == "delayed"
        assert report.ratio_of(1) == pytest.approx(2.0)


class TestDisparity:
    def test_equal_means(self):
        assert disparity({0: [0.4, 0.6], 1: [0.5, 0.5]}) == pytest.approx(0.0)

    def test_max_minus_min(self):
        assert disparity({0: [0.8], 1: [0.5], 2: [0.3]}) == pytest.approx(0.5)

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        groups = {k: rng.normal(size=5) for k in range(3)}
        shifted = {k: v + 7.3 for k, v in groups.items()}
        assert disparity(groups) == pytest.approx(disparity(shifted))

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            groups = {k: rng.normal(size=4) for k in range(3)}
            assert disparity(groups) >= 0.0

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            disparity({0: [0.5], 1: []})

    def test_per_capita_outcomes(self):
        groups = np.array([0, 0, 1, 1])
        events = [
            AllocationEvent(round=1, individual=0, resource=0, group=0,
                            base_reward=0.5, predicted_reward=0.0, drawn_cooldown=1),
            AllocationEvent(round=2, individual=0, resource=1, group=0,
                            base_reward=0.3, predicted_reward=0.0, drawn_cooldown=1),
            AllocationEvent(round=2, individual=3, resource=0, group=1,
                            base_reward=0.2, predicted_reward=0.0, drawn_cooldown=1),
        ]
        vectors = per_capita_outcomes(events, groups)
        np.testing.assert_allclose(vectors[0], [0.8, 0.0])
        np.testing.assert_allclose(vectors[1], [0.0, 0.2])
        assert disparity(vectors) == pytest.approx(0.3)
