"""Single-run simulation loop: one policy, one seeded environment.

Stream layout per run seed: "schedule" shuffles the cohorts, "environment"
draws outcome noise, "cooldowns" draws cooldown lengths, "policy:<name>"
feeds the policy's own randomness, and "meta" feeds the meta-level search.
Policy streams are namespaced so adding a policy to a grid never perturbs
another policy's draws.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .environment import Environment, build_schedule
from .policies import RunContext
from .rng import substream


@dataclass
class RunTrace:
    policy: str
    seed: int
    y: np.ndarray
    events: list
    lost_mass: float
    schedule: object
    meta_policies: list = field(default_factory=list)
    clipped: int = 0


def run_policy(
    policy,
    dataset,
    resources,
    horizon: int,
    block_length: int,
    seed: int,
    model=None,
    outcome_bounds=(0.0, 1.0),
    budget_reset_per_cohort: bool = False,
) -> RunTrace:
    """Run one policy over a full horizon and return its trace.

    The model (if any) is deep-copied so online refinement never leaks
    across runs; the oracle policy reads the dataset's ground truth.
    """
    schedule = build_schedule(
        [rec.id for rec in dataset.records], block_length, horizon,
        substream(seed, "schedule"),
    )
    env = Environment(
        dataset,
        resources,
        schedule,
        env_rng=substream(seed, "environment"),
        cooldown_rng=substream(seed, "cooldowns"),
        budget_reset_per_cohort=budget_reset_per_cohort,
    )
    ctx = RunContext(
        contexts=dataset.features_matrix(),
        groups=dataset.groups(),
        n_groups=dataset.n_groups,
        resources=list(resources),
        kernels={r.id: r.kernel for r in resources},
        schedule=schedule,
        horizon=horizon,
        model=copy.deepcopy(model) if (model is not None and policy.uses_model) else None,
        rng=substream(seed, "policy", policy.name),
        meta_rng=substream(seed, "meta"),
        outcome_bounds=tuple(outcome_bounds),
        true_means=dataset.true_means() if policy.name == "oracle" else None,
    )
    policy.start_run(ctx)
    ys = []
    while not env.done:
        t = env.round
        eligible = env.eligible_actions()
        actions = policy.select(env, eligible)
        predictions = getattr(policy, "last_predictions", None)
        y, contributions = env.apply_allocations(actions, predictions)
        policy.observe(t, y, contributions)
        ys.append(y)
    return RunTrace(
        policy=policy.name,
        seed=seed,
        y=np.asarray(ys),
        events=env.history,
        lost_mass=env.ledger.lost_mass,
        schedule=schedule,
        meta_policies=list(getattr(policy, "meta_policies", [])),
        clipped=int(getattr(policy, "clipped", 0)),
    )
