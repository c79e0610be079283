"""Built-in experiment configurations.

"desk" is the default desk-scale preset (N=200, 4 groups, 2 resources,
T=500, L=100, budgets 60, 20 seeds) with mild planted group heterogeneity:
group 0 responds a little better to both resources, and every (group,
resource) cell has its own weight vector so individual responsiveness
varies. "planted" strengthens one cell's effect for the disparity
benchmark. "smoke" is a seconds-scale sanity config.
"""

from __future__ import annotations

import copy

DESK_DATASET_SEED = 7300100

_DESK = {
    "schema_version": "1",
    "horizon": 500,
    "cohort_length": 100,
    "seeds": list(range(20)),
    "regimes": ["immediate", "delayed"],
    "kernel_types": ["type1", "type2"],
    "resources": [
        {
            "id": 0,
            "budget": 60,
            "cooldown_support": [1, 2, 3],
            "kernels": {
                "type1": {"alpha": 2.0, "beta": 30.0},
                "type2": {"alpha": 1.0, "beta": 0.8},
            },
        },
        {
            "id": 1,
            "budget": 60,
            "cooldown_support": [1, 2, 3],
            "kernels": {
                "type1": {"alpha": 2.5, "beta": 25.0},
                "type2": {"alpha": 1.2, "beta": 0.9},
            },
        },
    ],
    "oracle_per_round_cap": 4,
    "dataset": {
        "synthetic": {
            "n_individuals": 200,
            "n_groups": 4,
            "n_features": 10,
            "n_resources": 2,
            "outcome_kind": "continuous",
            "effect_scale": 1.2,
            "group_weight_jitter": 0.5,
            "group_feature_shift": 0.0,
            "group_onehot_features": True,
            "center_group_logits": True,
            "cell_offsets": [],
            "noise_sd": 0.1,
            "seed": DESK_DATASET_SEED,
        }
    },
    "model": {"kind": "ridge", "lam": 1.0, "train_fraction": 0.8, "refit_every": 25,
              "seed": 0},
    "policies": [
        {"name": "ucb"},
        {"name": "linucb", "alpha_lin": 1.0},
        {"name": "cucb", "set_size": 4},
        {"name": "exp3", "eta": 0.05},
        {"name": "mexp3", "eta": 0.05, "n_meta_arms": 16},
        {"name": "ducb", "gamma": 0.95},
        {"name": "swucb", "window": 50},
        {"name": "ccucb"},
        {"name": "metacub"},
    ],
    "outcome_bounds": [0.0, 1.0],
    "budget_reset_per_cohort": False,
    "output_dir": "reports/desk",
    "workers": 1,
}


def desk_config(**overrides) -> dict:
    config = copy.deepcopy(_DESK)
    config.update(overrides)
    return config


def planted_config(**overrides) -> dict:
    """Planted-heterogeneity benchmark for the disparity comparison.

    Group means are equal by construction, but group 0's responses are far
    more dispersed (its slope is scaled up): a flat score-maximizer chases
    that group's right tail while the meta level, seeing equal cell means,
    keeps interior budget fractions.
    """
    config = copy.deepcopy(_DESK)
    synth = config["dataset"]["synthetic"]
    synth["n_individuals"] = 400
    synth["n_groups"] = 2
    synth["cell_offsets"] = []
    synth["group_weight_jitter"] = 0.0
    synth["effect_scale"] = 1.0
    synth["group_effect_scales"] = [2.8, 0.4]
    synth["seed"] = DESK_DATASET_SEED + 1
    config["output_dir"] = "reports/planted"
    config.update(overrides)
    return config


def smoke_config(**overrides) -> dict:
    config = copy.deepcopy(_DESK)
    config.update(
        {
            "horizon": 10,
            "cohort_length": 5,
            "seeds": [0],
            "regimes": ["delayed"],
            "kernel_types": ["type1"],
            "policies": [{"name": "ucb"}],
            "output_dir": "reports/smoke",
        }
    )
    config["resources"] = copy.deepcopy(_DESK["resources"])
    for res in config["resources"]:
        res["budget"] = 10
    config["dataset"] = {
        "synthetic": {
            "n_individuals": 30,
            "n_groups": 3,
            "n_features": 4,
            "n_resources": 2,
            "outcome_kind": "continuous",
            "effect_scale": 1.0,
            "group_feature_shift": 0.0,
            "cell_offsets": [],
            "noise_sd": 0.1,
            "seed": 99,
        }
    }
    config.update(overrides)
    return config


PRESETS = {"desk": desk_config, "planted": planted_config, "smoke": smoke_config}
