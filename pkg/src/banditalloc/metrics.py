"""Run-trace metrics: cumulative regret against a greedy-with-truth oracle,
subgroup fairness ratios, and outcome disparity.

The hindsight-optimal allocation under the joint constraints is a hard
combinatorial problem; the oracle used here is per-round greedy on the true
means under the same feasibility rules, evaluated with common random
numbers, which preserves policy orderings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def greedy_feasible_actions(eligible, remaining_budgets, true_means, per_round_cap=None):
    """Greedy max-value feasible action set from an eligibility snapshot.

    Accepts pairs in descending true-mean order while each individual is
    unused, each resource has budget, and the optional per-round set width
    is not exceeded; pairs with nonpositive true mean are never taken.
    """
    order = sorted(eligible, key=lambda p: (-float(true_means[p[0]][p[1]]), p))
    chosen, used, res_used = [], set(), {}
    for (i, r) in order:
        if per_round_cap is not None and len(chosen) >= per_round_cap:
            break
        mean = float(true_means[i][r])
        if mean <= 0.0:
            break
        if i in used:
            continue
        if res_used.get(r, 0) >= remaining_budgets[r]:
            continue
        chosen.append((i, r))
        used.add(i)
        res_used[r] = res_used.get(r, 0) + 1
    return sorted(chosen)


def oracle_reward(eligible, remaining_budgets, true_means, per_round_cap=None) -> float:
    """True-mean value of the greedy feasible action set at one snapshot."""
    actions = greedy_feasible_actions(eligible, remaining_budgets, true_means,
                                      per_round_cap)
    return float(sum(true_means[i][r] for i, r in actions))


@dataclass
class RegretCurve:
    seed: int
    rounds: np.ndarray
    y: np.ndarray
    cum_regret: np.ndarray

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


def cumulative_regret(policy_y, oracle_y, seed: int = 0) -> RegretCurve:
    """Per-round cumulative gap between the oracle's and the policy's
    realized rewards (kernel-consistent for both)."""
    policy_y = np.asarray(policy_y, dtype=float)
    oracle_y = np.asarray(oracle_y, dtype=float)
    if policy_y.shape != oracle_y.shape:
        raise ValueError(
            f"trace length mismatch: policy {policy_y.shape} vs oracle {oracle_y.shape}"
        )
    gap = oracle_y - policy_y
    return RegretCurve(
        seed=seed,
        rounds=np.arange(1, policy_y.size + 1),
        y=policy_y,
        cum_regret=np.cumsum(gap),
    )


@dataclass
class FairnessReport:
    regime: str
    rows: list[tuple[int, int, int, float]]  # (group, count, size, ratio)

    def ratio_of(self, group: int) -> float:
        for g, _, _, ratio in self.rows:
            if g == group:
                return ratio
        raise KeyError(group)

    def max_deviation(self) -> float:
        return max(abs(ratio - 1.0) for _, _, _, ratio in self.rows)


def fairness_ratios(allocation_log, group_sizes: dict[int, int],
                    regime: str = "unspecified") -> FairnessReport:
    """Per-group allocation rate over the population-wide rate.

    allocation_log: iterable of events (or group ids). ratio_k =
    (count_k / n_k) / (total / N); the n_k/N-weighted mean of the ratios is
    exactly 1.
    """
    if any(size <= 0 for size in group_sizes.values()):
        raise ValueError("every group size must be positive")
    counts = {k: 0 for k in group_sizes}
    total = 0
    for item in allocation_log:
        g = int(item if isinstance(item, (int, np.integer)) else item.group)
        counts[g] += 1
        total += 1
    if total == 0:
        raise ValueError("empty allocation log")
    population = sum(group_sizes.values())
    overall = total / population
    rows = [
        (k, counts[k], group_sizes[k], (counts[k] / group_sizes[k]) / overall)
        for k in sorted(group_sizes)
    ]
    return FairnessReport(regime=regime, rows=rows)


def disparity(outcomes_by_group: dict[int, np.ndarray]) -> float:
    """Max minus min of the per-group mean outcomes."""
    if not outcomes_by_group:
        raise ValueError("no groups")
    means = []
    for k in sorted(outcomes_by_group):
        values = np.asarray(outcomes_by_group[k], dtype=float)
        if values.size == 0:
            raise ValueError(f"group {k} has no outcomes")
        means.append(float(values.mean()))
    return max(means) - min(means)


def per_capita_outcomes(events, groups: np.ndarray) -> dict[int, np.ndarray]:
    """Per-individual total realized base reward, grouped; individuals with
    no allocation contribute 0. Feeding these vectors to disparity() gives
    the per-capita benefit gap across groups."""
    groups = np.asarray(groups, dtype=int)
    totals = np.zeros(groups.size)
    for ev in events:
        totals[ev.individual] += ev.base_reward
    return {int(k): totals[groups == k] for k in sorted(set(groups.tolist()))}
