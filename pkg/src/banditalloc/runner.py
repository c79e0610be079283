"""Experiment orchestration: config validation, the (policy x regime x
kernel-type x seed) grid, audits, and byte-stable CSV reports.

All randomness inside a grid cell derives from its run seed through named
substreams, every float is written with one fixed format, and rows are
emitted in canonical sorted order, so re-running a config reproduces the
report files byte for byte. Any audit violation aborts the run with the
offending trace written next to the reports.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSchema, SyntheticSpec, generate_synthetic, load_csv_split, split
from .delay import BetaParams, DelayKernel, immediate_kernel, make_delay_kernel, make_mixture_kernel
from .environment import ResourceSpec, audit_trace, build_schedule
from .metrics import cumulative_regret, fairness_ratios, per_capita_outcomes, disparity
from .models import evaluate_model, fit_outcome_model
from .policies import POLICIES, ExplorationSchedule, OraclePolicy, build_policy
from .metacub import MetaOptimizerConfig
from .rng import substream
from .simulate import run_policy

FLOAT = ".10g"
WORKERS_ENV = "BANDITALLOC_WORKERS"
SCHEMA_VERSION = "1"

DEFAULT_POLICY_REGIMES = {
    "ucb": ("immediate", "delayed"),
    "linucb": ("immediate", "delayed"),
    "cucb": ("immediate",),
    "exp3": ("immediate", "delayed"),
    "mexp3": ("immediate",),
    "ducb": ("delayed",),
    "swucb": ("delayed",),
    "ccucb": ("immediate", "delayed"),
    "metacub": ("immediate", "delayed"),
}

REPORT_FILES = (
    "regret.csv",
    "fairness.csv",
    "disparity.csv",
    "allocations.csv",
    "kernels.csv",
    "metapolicy.csv",
    "summary.csv",
    "model_eval.csv",
)


class ConfigError(ValueError):
    """Raised with every validation problem enumerated, one per line."""


def validate_config(raw: dict) -> list[str]:
    """Return all config problems (empty list means valid)."""
    errors = []
    if raw.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version must be {SCHEMA_VERSION!r}")
    horizon = raw.get("horizon", 0)
    cohort = raw.get("cohort_length", 0)
    if not (isinstance(horizon, int) and isinstance(cohort, int) and horizon >= cohort >= 1):
        errors.append("need horizon >= cohort_length >= 1")
    seeds = raw.get("seeds")
    if not seeds or not all(isinstance(s, int) for s in seeds):
        errors.append("seeds must be a nonempty list of integers")
    regimes = raw.get("regimes") or []
    if not regimes or not set(regimes) <= {"immediate", "delayed"}:
        errors.append("regimes must be a nonempty subset of {immediate, delayed}")
    kernel_types = raw.get("kernel_types") or []
    if not kernel_types:
        errors.append("kernel_types must be nonempty")
    resources = raw.get("resources") or []
    if not resources:
        errors.append("resources must be nonempty")
    for res in resources:
        rid = res.get("id")
        if res.get("budget", -1) < 0:
            errors.append(f"resource {rid}: budget must be >= 0")
        support = res.get("cooldown_support") or []
        if not support or any((not isinstance(c, int)) or c < 1 for c in support):
            errors.append(f"resource {rid}: cooldown_support needs positive integers")
        elif isinstance(horizon, int) and any(c >= horizon for c in support):
            errors.append(f"resource {rid}: cooldown values must be < horizon")
        kernels = res.get("kernels") or {}
        for kt in kernel_types:
            if kt not in kernels:
                errors.append(f"resource {rid}: missing kernel definition for {kt!r}")
    dataset = raw.get("dataset") or {}
    if sum(key in dataset for key in ("synthetic", "csv")) != 1:
        errors.append("dataset must define exactly one of 'synthetic' or 'csv'")
    elif "synthetic" in dataset:
        try:
            spec = SyntheticSpec(**dataset["synthetic"])
            if spec.n_resources != len(resources):
                errors.append("synthetic n_resources must match the resources list")
        except (TypeError, ValueError) as exc:
            errors.append(f"synthetic spec invalid: {exc}")
    model = raw.get("model") or {}
    if model.get("kind") not in ("ridge", "logistic", "mlp"):
        errors.append("model kind must be one of ridge, logistic, mlp")
    if not 0.0 < model.get("train_fraction", 0.8) < 1.0:
        errors.append("model train_fraction must lie in (0, 1)")
    policies = raw.get("policies") or []
    if not policies:
        errors.append("policies must be nonempty")
    known = set(POLICIES) | {"metacub"}
    for entry in policies:
        name = entry.get("name")
        if name not in known:
            errors.append(f"unknown policy key {name!r}")
        for reg in entry.get("regimes", []):
            if reg not in ("immediate", "delayed"):
                errors.append(f"policy {name}: unknown regime {reg!r}")
    bounds = raw.get("outcome_bounds", [0.0, 1.0])
    if not (len(bounds) == 2 and bounds[0] < bounds[1]):
        errors.append("outcome_bounds must be [lo, hi] with lo < hi")
    if not raw.get("output_dir"):
        errors.append("output_dir is required")
    return errors


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    errors = validate_config(raw)
    if errors:
        raise ConfigError("\n".join(errors))
    return raw


def build_kernel(defn: dict, horizon: int, resource: int) -> DelayKernel:
    if "mixture" in defn:
        components = [
            (c["weight"], BetaParams(c["alpha"], c["beta"])) for c in defn["mixture"]
        ]
        return make_mixture_kernel(components, horizon, resource)
    return make_delay_kernel(BetaParams(defn["alpha"], defn["beta"]), horizon, resource)


def build_resources(raw: dict, regime: str, kernel_type: str) -> list[ResourceSpec]:
    horizon = raw["horizon"]
    out = []
    for res in raw["resources"]:
        rid = int(res["id"])
        if regime == "immediate":
            kernel = immediate_kernel(horizon, resource=rid)
        else:
            kernel = build_kernel(res["kernels"][kernel_type], horizon, rid)
        out.append(
            ResourceSpec(
                id=rid,
                budget=int(res["budget"]),
                kernel=kernel,
                cooldown_support=tuple(res["cooldown_support"]),
            )
        )
    return out


def build_dataset(raw: dict):
    """Dataset plus (train, eval) record lists for the outcome model."""
    model_cfg = raw.get("model", {})
    frac = float(model_cfg.get("train_fraction", 0.8))
    split_rng = substream(int(model_cfg.get("seed", 0)), "split")
    ds_cfg = raw["dataset"]
    if "synthetic" in ds_cfg:
        dataset = generate_synthetic(SyntheticSpec(**ds_cfg["synthetic"]))
        train, evaluation = split(dataset, frac, split_rng)
        return dataset, train, evaluation
    csv_cfg = ds_cfg["csv"]
    schema = DatasetSchema(
        id_column=csv_cfg["schema"]["id_column"],
        group_column=csv_cfg["schema"]["group_column"],
        outcome_column=csv_cfg["schema"]["outcome_column"],
        feature_columns=tuple(csv_cfg["schema"]["feature_columns"]),
        outcome_kind=csv_cfg["schema"].get("outcome_kind", "continuous"),
    )
    dataset, train, evaluation = load_csv_split(csv_cfg["path"], schema, frac, split_rng)
    return dataset, train, evaluation


def attach_csv_ground_truth(dataset, train, evaluation, model_cfg, n_resources):
    """Observational datasets carry no per-resource truth: stand one in with
    a model fit on the train split plus its held-out residual noise."""
    oracle = fit_outcome_model(
        [(r.features, r.outcome) for r in train],
        model_cfg.get("kind", "ridge"),
        lam=float(model_cfg.get("lam", 1.0)),
        outcome_kind=dataset.outcome_kind,
        seed=int(model_cfg.get("seed", 0)),
    )
    X_eval = np.asarray([r.features for r in evaluation])
    y_eval = np.asarray([r.outcome for r in evaluation])
    residual_sd = float(np.std(oracle.predict_batch(X_eval) - y_eval)) if len(evaluation) else 0.0
    for rec in dataset.records:
        rec.true_outcome_params = np.full(n_resources, oracle.predict(rec.features))
    dataset.noise_sd = residual_sd
    return dataset


def fit_shared_model(raw: dict, dataset, train, evaluation):
    model_cfg = raw.get("model", {})
    model = fit_outcome_model(
        [(rec.features, rec.outcome) for rec in train],
        model_cfg.get("kind", "ridge"),
        lam=float(model_cfg.get("lam", 1.0)),
        outcome_kind=dataset.outcome_kind,
        seed=int(model_cfg.get("seed", 0)),
    )
    eval_rows = []
    for split_name, records in (("train", train), ("eval", evaluation)):
        if not records:
            continue
        X = np.asarray([r.features for r in records])
        y = np.asarray([r.outcome for r in records])
        groups = np.asarray([r.group for r in records])
        for group, metric, value in evaluate_model(model, X, y, groups, dataset.outcome_kind):
            eval_rows.append((split_name, group, metric, value))
    return model, eval_rows


def _policy_regimes(entry: dict, config_regimes) -> list[str]:
    allowed = entry.get("regimes") or DEFAULT_POLICY_REGIMES[entry["name"]]
    return [r for r in config_regimes if r in allowed]


def _policy_params(entry: dict, raw: dict) -> dict:
    params = {k: v for k, v in entry.items() if k not in ("name", "regimes")}
    refit = raw.get("model", {}).get("refit_every", 25)
    if entry["name"] in ("ccucb", "metacub"):
        params.setdefault("refit_every", int(refit))
    if "beta" in params and isinstance(params["beta"], dict):
        params["beta"] = ExplorationSchedule(**params["beta"])
    if "optimizer" in params and isinstance(params["optimizer"], dict):
        opt = dict(params["optimizer"])
        if "beta_schedule" in opt and isinstance(opt["beta_schedule"], dict):
            opt["beta_schedule"] = ExplorationSchedule(**opt["beta_schedule"])
        params["optimizer"] = MetaOptimizerConfig(**opt)
    return params


@dataclass
class CellResult:
    policy: str
    regime: str
    kernel_type: str
    seed: int
    y: np.ndarray
    cum_regret: np.ndarray
    events: list
    meta_policies: list
    violations: list
    total_reward: float


def run_cell(raw, dataset, model, entry, regime, kernel_type, seed,
             oracle_cache=None) -> CellResult:
    resources = build_resources(raw, regime, kernel_type)
    horizon = raw["horizon"]
    block = raw["cohort_length"]
    bounds = tuple(raw.get("outcome_bounds", (0.0, 1.0)))
    reset = bool(raw.get("budget_reset_per_cohort", False))
    cache_key = (regime, kernel_type, seed)
    oracle_y = None
    if oracle_cache is not None:
        oracle_y = oracle_cache.get(cache_key)
    if oracle_y is None:
        oracle_trace = run_policy(
            OraclePolicy(per_round_cap=raw.get("oracle_per_round_cap", 4)),
            dataset, resources, horizon, block, seed,
            outcome_bounds=bounds, budget_reset_per_cohort=reset,
        )
        oracle_y = oracle_trace.y
        if oracle_cache is not None:
            oracle_cache[cache_key] = oracle_y
    policy = build_policy(entry["name"], _policy_params(entry, raw))
    trace = run_policy(
        policy, dataset, resources, horizon, block, seed,
        model=model, outcome_bounds=bounds, budget_reset_per_cohort=reset,
    )
    violations = audit_trace(trace.events, resources, trace.schedule,
                             budget_reset_per_cohort=reset)
    curve = cumulative_regret(trace.y, oracle_y, seed=seed)
    return CellResult(
        policy=entry["name"],
        regime=regime,
        kernel_type=kernel_type,
        seed=seed,
        y=trace.y,
        cum_regret=curve.cum_regret,
        events=trace.events,
        meta_policies=trace.meta_policies,
        violations=violations,
        total_reward=float(trace.y.sum()),
    )


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return format(float(x), FLOAT)


@dataclass
class ReportBundle:
    output_dir: str
    files: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)


def run_experiment(raw: dict, progress=None) -> ReportBundle:
    """Execute the full grid and write every report CSV.

    Raises ConfigError on an invalid config and RuntimeError (after writing
    the offending trace) if any run fails its audit.
    """
    errors = validate_config(raw)
    if errors:
        raise ConfigError("\n".join(errors))
    out_dir = raw["output_dir"]
    os.makedirs(out_dir, exist_ok=True)

    dataset, train, evaluation = build_dataset(raw)
    n_resources = len(raw["resources"])
    if "csv" in raw["dataset"]:
        dataset = attach_csv_ground_truth(dataset, train, evaluation, raw.get("model", {}),
                                          n_resources)
    model, model_eval_rows = fit_shared_model(raw, dataset, train, evaluation)

    cells = []
    for entry in raw["policies"]:
        for regime in _policy_regimes(entry, raw["regimes"]):
            for kernel_type in raw["kernel_types"]:
                for seed in raw["seeds"]:
                    cells.append((entry, regime, kernel_type, seed))
    cells.sort(key=lambda c: (c[0]["name"], c[1], c[2], c[3]))

    workers = int(os.environ.get(WORKERS_ENV, raw.get("workers", 1)))
    oracle_cache: dict = {}
    results: list[CellResult] = []
    if workers > 1:
        results = _run_cells_parallel(raw, dataset, model, cells, workers)
    else:
        for idx, (entry, regime, kernel_type, seed) in enumerate(cells):
            result = run_cell(raw, dataset, model, entry, regime, kernel_type, seed,
                              oracle_cache)
            results.append(result)
            if progress:
                progress(idx + 1, len(cells), result)

    for result in results:
        if result.violations:
            path = os.path.join(
                out_dir,
                f"violations_{result.policy}_{result.regime}_{result.kernel_type}"
                f"_seed{result.seed}.txt",
            )
            with open(path, "w", encoding="utf-8") as fh:
                for v in result.violations:
                    fh.write(f"{v}\n")
            raise RuntimeError(f"audit violations; offending trace report: {path}")

    results.sort(key=lambda r: (r.policy, r.regime, r.kernel_type, r.seed))
    files = {}

    regret_rows = []
    for r in results:
        for t in range(r.y.size):
            regret_rows.append(
                (r.seed, r.policy, r.regime, r.kernel_type, t + 1,
                 _fmt(r.y[t]), _fmt(r.cum_regret[t]))
            )
    files["regret.csv"] = os.path.join(out_dir, "regret.csv")
    _write_rows(files["regret.csv"],
                ["seed", "policy", "regime", "kernel_type", "round", "y", "cum_regret"],
                regret_rows)

    alloc_rows = []
    for r in results:
        for ev in r.events:
            alloc_rows.append(
                (r.seed, r.policy, r.regime, r.kernel_type, ev.round, ev.individual,
                 ev.group, ev.resource, _fmt(ev.base_reward), ev.drawn_cooldown)
            )
    files["allocations.csv"] = os.path.join(out_dir, "allocations.csv")
    _write_rows(
        files["allocations.csv"],
        ["seed", "policy", "regime", "kernel_type", "round", "individual", "group",
         "resource", "base_reward", "drawn_cooldown"],
        alloc_rows,
    )

    group_sizes = dataset.group_sizes()
    fairness_rows, disparity_rows = [], []
    groups_arr = dataset.groups()
    for r in results:
        if r.events:
            report = fairness_ratios(r.events, group_sizes, regime=r.regime)
            for group, count, size, ratio in report.rows:
                fairness_rows.append(
                    (r.seed, r.policy, r.regime, r.kernel_type, group, count, size,
                     _fmt(ratio))
                )
        vectors = per_capita_outcomes(r.events, groups_arr)
        disparity_rows.append(
            (r.seed, r.policy, r.regime, r.kernel_type, _fmt(disparity(vectors)))
        )
    files["fairness.csv"] = os.path.join(out_dir, "fairness.csv")
    _write_rows(
        files["fairness.csv"],
        ["seed", "policy", "regime", "kernel_type", "group", "count", "size", "ratio"],
        fairness_rows,
    )
    files["disparity.csv"] = os.path.join(out_dir, "disparity.csv")
    _write_rows(files["disparity.csv"],
                ["seed", "policy", "regime", "kernel_type", "disparity"], disparity_rows)

    kernel_rows = []
    for kernel_type in raw["kernel_types"]:
        for res in build_resources(raw, "delayed", kernel_type):
            for tau, w in enumerate(res.kernel.weights):
                kernel_rows.append((kernel_type, res.id, tau, _fmt(w)))
    files["kernels.csv"] = os.path.join(out_dir, "kernels.csv")
    _write_rows(files["kernels.csv"], ["kernel_type", "resource", "tau", "weight"],
                kernel_rows)

    meta_rows = []
    for r in results:
        for cohort, z in r.meta_policies:
            z = np.asarray(z)
            for k in range(z.shape[0]):
                for res_id in range(z.shape[1]):
                    meta_rows.append(
                        (r.seed, r.policy, r.regime, r.kernel_type, cohort, k, res_id,
                         _fmt(z[k, res_id]))
                    )
    files["metapolicy.csv"] = os.path.join(out_dir, "metapolicy.csv")
    _write_rows(
        files["metapolicy.csv"],
        ["seed", "policy", "regime", "kernel_type", "cohort", "group", "resource",
         "fraction"],
        meta_rows,
    )

    summary_rows = []
    by_combo: dict = {}
    for r in results:
        by_combo.setdefault((r.policy, r.regime, r.kernel_type), []).append(r)
    for (policy, regime, kernel_type), group in sorted(by_combo.items()):
        finals = np.asarray([g.cum_regret[-1] for g in group])
        totals = np.asarray([g.total_reward for g in group])
        summary_rows.append(
            (policy, regime, kernel_type, len(group), _fmt(finals.mean()),
             _fmt(finals.std()), _fmt(totals.mean()))
        )
    files["summary.csv"] = os.path.join(out_dir, "summary.csv")
    _write_rows(
        files["summary.csv"],
        ["policy", "regime", "kernel_type", "n_seeds", "mean_final_regret",
         "std_final_regret", "mean_total_reward"],
        summary_rows,
    )

    eval_rows = [(split_name, group, metric, _fmt(value))
                 for split_name, group, metric, value in model_eval_rows]
    files["model_eval.csv"] = os.path.join(out_dir, "model_eval.csv")
    _write_rows(files["model_eval.csv"], ["split", "group", "metric", "value"], eval_rows)

    snapshot = os.path.join(out_dir, "config_snapshot.json")
    with open(snapshot, "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["config_snapshot.json"] = snapshot

    return ReportBundle(output_dir=out_dir, files=files, summary=summary_rows)


_PARALLEL_STATE: dict = {}


def _parallel_worker(cell):
    entry, regime, kernel_type, seed = cell
    state = _PARALLEL_STATE
    return run_cell(state["raw"], state["dataset"], state["model"], entry, regime,
                    kernel_type, seed)


def _run_cells_parallel(raw, dataset, model, cells, workers):
    import multiprocessing as mp

    try:
        ctx = mp.get_context("fork")
    except ValueError:
        return [
            run_cell(raw, dataset, model, entry, regime, kernel_type, seed, {})
            for entry, regime, kernel_type, seed in cells
        ]
    _PARALLEL_STATE.update({"raw": raw, "dataset": dataset, "model": model})
    try:
        with ctx.Pool(processes=workers) as pool:
            return pool.map(_parallel_worker, cells)
    finally:
        _PARALLEL_STATE.clear()


def audit_report(report_dir: str) -> list[str]:
    """Re-check allocations.csv in a report directory against its config.

    Returns human-readable violation lines (empty means clean).
    """
    with open(os.path.join(report_dir, "config_snapshot.json"), encoding="utf-8") as fh:
        raw = json.load(fh)
    dataset, _, _ = build_dataset(raw)
    runs: dict = {}
    with open(os.path.join(report_dir, "allocations.csv"), newline="",
              encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["policy"], row["regime"], row["kernel_type"], int(row["seed"]))
            runs.setdefault(key, []).append(row)

    from .environment import AllocationEvent

    messages = []
    groups = dataset.groups()
    for (policy, regime, kernel_type, seed), rows in sorted(runs.items()):
        resources = build_resources(raw, regime, kernel_type)
        schedule = build_schedule(
            [rec.id for rec in dataset.records], raw["cohort_length"], raw["horizon"],
            substream(seed, "schedule"),
        )
        events = [
            AllocationEvent(
                round=int(row["round"]),
                individual=int(row["individual"]),
                resource=int(row["resource"]),
                group=int(groups[int(row["individual"])]),
                base_reward=float(row["base_reward"]),
                predicted_reward=float("nan"),
                drawn_cooldown=int(row["drawn_cooldown"]),
            )
            for row in rows
        ]
        for v in audit_trace(events, resources, schedule,
                             budget_reset_per_cohort=bool(raw.get("budget_reset_per_cohort"))):
            messages.append(f"{policy}/{regime}/{kernel_type}/seed{seed}: {v}")
    return messages
