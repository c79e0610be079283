"""The constrained allocation environment.

Enforces, per round: at most one resource per individual, per-resource
budgets over the horizon, post-allocation cooldown windows, and cohort
eligibility. Realized rewards flow through each resource's delay kernel via
the ledger. Constraint violations are hard errors inside the engine; the
audit oracle below is an independent pure re-check of a finished trace so
engine bugs and policy bugs stay distinguishable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .delay import DelayKernel, RewardLedger


class ConstraintViolation(RuntimeError):
    """An action set broke one of the allocation constraints."""


@dataclass(frozen=True)
class ResourceSpec:
    id: int
    budget: int
    kernel: DelayKernel
    cooldown_support: tuple[int, ...]

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        support = tuple(sorted(set(int(c) for c in self.cooldown_support)))
        if not support or any(c < 1 for c in support):
            raise ValueError("cooldown support must be a nonempty set of positive integers")
        object.__setattr__(self, "cooldown_support", support)

    def validate_for_horizon(self, horizon: int) -> None:
        if any(c >= horizon for c in self.cooldown_support):
            raise ValueError(
                f"cooldown values {self.cooldown_support} must be < horizon {horizon}"
            )
        if self.kernel.horizon != horizon:
            raise ValueError(
                f"kernel for resource {self.id} has length {self.kernel.horizon}, "
                f"expected horizon {horizon}"
            )


@dataclass
class CohortSchedule:
    """Disjoint cohorts active on contiguous blocks of `block_length` rounds."""

    block_length: int
    horizon: int
    cohorts: list[list[int]]

    def active_index(self, t: int) -> int:
        return (t - 1) // self.block_length

    def active_members(self, t: int) -> list[int]:
        return self.cohorts[self.active_index(t)]

    def is_block_start(self, t: int) -> bool:
        return (t - 1) % self.block_length == 0

    @property
    def n_blocks(self) -> int:
        return len(self.cohorts)


def build_schedule(individual_ids, block_length: int, horizon: int, rng) -> CohortSchedule:
    """Randomly partition individuals into ceil(T/L) near-equal cohorts."""
    if block_length < 1 or horizon < 1:
        raise ValueError("block length and horizon must be >= 1")
    ids = list(individual_ids)
    n_blocks = math.ceil(horizon / block_length)
    if len(ids) < n_blocks:
        raise ValueError(f"{len(ids)} individuals cannot fill {n_blocks} cohorts")
    order = [ids[i] for i in rng.permutation(len(ids))]
    base, extra = divmod(len(ids), n_blocks)
    cohorts, pos = [], 0
    for h in range(n_blocks):
        size = base + (1 if h < extra else 0)
        cohorts.append(sorted(order[pos : pos + size]))
        pos += size
    return CohortSchedule(block_length=block_length, horizon=horizon, cohorts=cohorts)


@dataclass
class AllocationEvent:
    round: int
    individual: int
    resource: int
    group: int
    base_reward: float
    predicted_reward: float
    drawn_cooldown: int


class Environment:
    """One simulation run's mutable state plus the allocation rules."""

    def __init__(self, dataset, resources, schedule, env_rng, cooldown_rng,
                 budget_reset_per_cohort: bool = False):
        self.dataset = dataset
        self.resources = {r.id: r for r in resources}
        self.schedule = schedule
        self.horizon = schedule.horizon
        for r in resources:
            r.validate_for_horizon(self.horizon)
        self.env_rng = env_rng
        self.cooldown_rng = cooldown_rng
        self.budget_reset_per_cohort = budget_reset_per_cohort
        self.round = 1
        self.remaining_budgets = {r.id: int(r.budget) for r in resources}
        self.cooldown_until: dict[tuple[int, int], int] = {}
        self.ledger = RewardLedger(horizon=self.horizon)
        self.history: list[AllocationEvent] = []
        self._groups = dataset.groups()
        self._true_means = dataset.true_means()
        self._noise_sd = dataset.noise_sd

    @property
    def done(self) -> bool:
        return self.round > self.horizon

    def eligible_actions(self) -> list[tuple[int, int]]:
        """(individual, resource) pairs allocatable this round, stable order."""
        t = self.round
        if t > self.horizon:
            return []
        pairs = []
        open_resources = [r for r in sorted(self.resources) if self.remaining_budgets[r] > 0]
        for i in self.schedule.active_members(t):
            for r in open_resources:
                if self.cooldown_until.get((i, r), 0) < t:
                    pairs.append((i, r))
        return pairs

    def _draw_base_reward(self, i: int, r: int) -> float:
        mean = float(self._true_means[i][r])
        if self._noise_sd > 0:
            return mean + self._noise_sd * float(self.env_rng.standard_normal())
        return mean

    def apply_allocations(self, actions, predictions=None):
        """Execute an action set at the current round.

        Returns (realized y(t), contributions), where contributions lists
        (AllocationEvent, amount) pairs for every posting whose kernel mass
        lands this round. Ineligible, duplicated, or over-budget actions
        raise ConstraintViolation. The round counter then advances.
        """
        t = self.round
        if t > self.horizon:
            raise ConstraintViolation(f"round {t} is past the horizon {self.horizon}")
        actions = sorted(set((int(i), int(r)) for i, r in actions))
        eligible = set(self.eligible_actions())
        individuals = [i for i, _ in actions]
        if len(set(individuals)) != len(individuals):
            raise ConstraintViolation(f"round {t}: an individual appears twice in the action set")
        per_resource: dict[int, int] = {}
        for (i, r) in actions:
            if (i, r) not in eligible:
                raise ConstraintViolation(f"round {t}: action ({i}, {r}) is not eligible")
            per_resource[r] = per_resource.get(r, 0) + 1
        for r, count in per_resource.items():
            if count > self.remaining_budgets[r]:
                raise ConstraintViolation(
                    f"round {t}: {count} allocations of resource {r} exceed the "
                    f"remaining budget {self.remaining_budgets[r]}"
                )
        predictions = predictions or {}
        for (i, r) in actions:
            spec = self.resources[r]
            base = self._draw_base_reward(i, r)
            support = spec.cooldown_support
            cd = int(support[0]) if len(support) == 1 else int(self.cooldown_rng.choice(support))
            self.remaining_budgets[r] -= 1
            self.cooldown_until[(i, r)] = t + cd
            event = AllocationEvent(
                round=t,
                individual=i,
                resource=r,
                group=int(self._groups[i]),
                base_reward=base,
                predicted_reward=float(predictions.get((i, r), float("nan"))),
                drawn_cooldown=cd,
            )
            self.ledger.post(t, base, spec.kernel, tag=event)
            self.history.append(event)
        y = self.ledger.realize(t)
        contributions = self.ledger.contributions(t)
        self.round += 1
        if (
            self.budget_reset_per_cohort
            and self.round <= self.horizon
            and self.schedule.is_block_start(self.round)
        ):
            for r, spec in self.resources.items():
                self.remaining_budgets[r] = int(spec.budget)
        return y, contributions


@dataclass(frozen=True)
class Violation:
    kind: str  # "one-per-round" | "budget" | "cooldown" | "cohort"
    round: int
    message: str

    def __str__(self):
        return f"[{self.kind}] round {self.round}: {self.message}"


def audit_trace(events, resources, schedule, budget_reset_per_cohort: bool = False):
    """Independent post-hoc checker of a finished allocation trace.

    Returns an empty list iff the one-resource-per-individual-per-round
    rule, the per-resource budgets, the drawn cooldown windows, and cohort
    eligibility all hold.
    """
    violations: list[Violation] = []
    budgets = {r.id: int(r.budget) for r in resources}

    seen_round_individual: set[tuple[int, int]] = set()
    for ev in events:
        key = (ev.round, ev.individual)
        if key in seen_round_individual:
            violations.append(Violation(
                "one-per-round", ev.round,
                f"individual {ev.individual} received more than one resource",
            ))
        seen_round_individual.add(key)

    if budget_reset_per_cohort:
        used: dict[tuple[int, int], int] = {}
        for ev in events:
            block = schedule.active_index(ev.round)
            used[(block, ev.resource)] = used.get((block, ev.resource), 0) + 1
        for (block, r), count in sorted(used.items()):
            if count > budgets[r]:
                violations.append(Violation(
                    "budget", (block * schedule.block_length) + 1,
                    f"{count} allocations of resource {r} in cohort block {block} "
                    f"exceed budget {budgets[r]}",
                ))
    else:
        used_total: dict[int, int] = {}
        for ev in events:
            used_total[ev.resource] = used_total.get(ev.resource, 0) + 1
        for r, count in sorted(used_total.items()):
            if count > budgets[r]:
                violations.append(Violation(
                    "budget", 0, f"{count} allocations of resource {r} exceed budget {budgets[r]}"
                ))

    by_pair: dict[tuple[int, int], list] = {}
    for ev in events:
        by_pair.setdefault((ev.individual, ev.resource), []).append(ev)
    for (i, r), pair_events in sorted(by_pair.items()):
        pair_events.sort(key=lambda e: e.round)
        for prev, nxt in zip(pair_events, pair_events[1:]):
            if nxt.round <= prev.round + prev.drawn_cooldown:
                violations.append(Violation(
                    "cooldown", nxt.round,
                    f"({i}, {r}) reallocated {nxt.round - prev.round} rounds after round "
                    f"{prev.round} despite drawn cooldown {prev.drawn_cooldown}",
                ))

    for ev in events:
        if ev.individual not in schedule.active_members(ev.round):
            violations.append(Violation(
                "cohort", ev.round,
                f"individual {ev.individual} is not in the cohort active at round {ev.round}",
            ))

    violations.sort(key=lambda v: (v.round, v.kind, v.message))
    return violations
