import numpy as np
import pytest

from banditalloc.data import SyntheticSpec, generate_synthetic
from banditalloc.delay import BetaParams, immediate_kernel, make_delay_kernel
from banditalloc.environment import Environment, ResourceSpec, build_schedule
from banditalloc.rng import substream


def make_env(
    *,
    n=12,
    n_groups=3,
    n_features=3,
    n_resources=2,
    horizon=10,
    block_length=10,
    budgets=None,
    cooldown_support=(1, 2, 3),
    kernel="immediate",
    noise_sd=0.0,
    seed=0,
    data_seed=100,
    budget_reset_per_cohort=False,
    effect_scale=1.0,
):
    """Small fully-wired environment for unit tests."""
    spec = SyntheticSpec(
        n_individuals=n,
        n_groups=n_groups,
        n_features=n_features,
        n_resources=n_resources,
        noise_sd=noise_sd,
        effect_scale=effect_scale,
        seed=data_seed,
    )
    dataset = generate_synthetic(spec)
    budgets = budgets or [n * horizon] * n_resources
    resources = []
    for r in range(n_resources):
        if kernel == "immediate":
            k = immediate_kernel(horizon, resource=r)
        else:
            alpha, beta = kernel
            k = make_delay_kernel(BetaParams(alpha, beta), horizon, resource=r)
        resources.append(
            ResourceSpec(id=r, budget=budgets[r], kernel=k, cooldown_support=cooldown_support)
        )
    schedule = build_schedule(
        [rec.id for rec in dataset.records], block_length, horizon, substream(seed, "schedule")
    )
    env = Environment(
        dataset,
        resources,
        schedule,
        env_rng=substream(seed, "environment"),
        cooldown_rng=substream(seed, "cooldowns"),
        budget_reset_per_cohort=budget_reset_per_cohort,
    )
    return env, dataset, resources, schedule


@pytest.fixture
def small_env():
    return make_env()
