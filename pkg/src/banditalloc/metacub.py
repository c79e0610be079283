"""Bi-level allocation policy.

Phase 1 searches the sub-simplex of (group, resource) budget fractions by
simulation-guided UCB: candidate meta-policies are scored by the mean plus
a time-scaled standard deviation of stochastic rollouts that assign
floor(z[k, r] * |group k|) members per cell uniformly at random and average
the outcome model's predictions. Phase 2 turns the winning fractions into
per-round action sets by ranking individuals within each cell on
prediction + beta * uncertainty, respecting budgets, cooldowns, and the
one-resource-per-individual rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import uncertainty
from .policies import ExplorationSchedule, Policy


def sample_sub_simplex(dim: int, rng) -> np.ndarray:
    """Uniform draw from {z >= 0 : sum z <= 1} via a flat Dirichlet with one
    slack coordinate dropped."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return rng.dirichlet(np.ones(dim + 1))[:dim]


def check_meta_policy(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0):
        raise ValueError("meta-policy cells must be nonnegative")
    if float(z.sum()) > 1.0 + 1e-9:
        raise ValueError(f"meta-policy mass {z.sum()} exceeds the sub-simplex")
    return z


@dataclass(frozen=True)
class MetaOptimizerConfig:
    meta_iterations: int = 64  # T_m
    initial_policies: int = 16  # n_0
    candidate_set_size: int = 64
    rollouts: int = 8  # B, simulations per candidate
    beta_schedule: ExplorationSchedule = field(default_factory=ExplorationSchedule)

    def __post_init__(self):
        if self.initial_policies < 1:
            raise ValueError("need at least one initial policy")
        if self.meta_iterations < self.initial_policies:
            raise ValueError("meta iteration budget cannot be below the initial batch")
        if self.rollouts < 1:
            raise ValueError("need at least one rollout per candidate")
        if self.candidate_set_size < 1:
            raise ValueError("candidate set must be nonempty")


@dataclass
class MetaEvaluation:
    policy: np.ndarray
    mu: float
    sigma: float
    score: float


@dataclass(frozen=True)
class ScoredCandidate:
    """One (individual, resource) candidate with its UCB decomposition."""

    individual: int
    resource: int
    predicted: float
    uncertainty: float
    score: float


def draw_assignment(z: np.ndarray, group_sizes: dict[int, int], rng) -> dict:
    """One rollout's cell assignment: floor(z[k, r] * n_k) member indices per
    cell, drawn uniformly without replacement within each group."""
    z = check_meta_policy(z)
    assignment = {}
    for k in sorted(group_sizes):
        n_k = group_sizes[k]
        if n_k == 0:
            continue
        perm = rng.permutation(n_k)
        pos = 0
        for r in range(z.shape[1]):
            n = int(math.floor(z[k, r] * n_k))
            if n > 0:
                assignment[(k, r)] = perm[pos : pos + n]
                pos += n
    return assignment


def utility_of_assignment(z: np.ndarray, assignment: dict,
                          preds: dict[int, np.ndarray]) -> float:
    """Weighted sum over cells of z[k, r] times the cell's mean prediction;
    cells with no drawn recipients contribute 0."""
    total = 0.0
    for (k, r), idx in assignment.items():
        if len(idx) > 0:
            total += float(z[k, r]) * float(preds[k][r][idx].mean())
    return total


def _group_predictions(groups: dict[int, np.ndarray], model, n_resources: int):
    """preds[k][r] = model predictions for group k's members under r."""
    preds = {}
    for k in sorted(groups):
        X = np.asarray(groups[k], dtype=float)
        if X.size == 0:
            preds[k] = np.zeros((n_resources, 0))
        else:
            preds[k] = np.stack([model.predict_batch(X, r) for r in range(n_resources)])
    return preds


def simulate_utility(z: np.ndarray, groups: dict[int, np.ndarray], model, rng) -> float:
    """One stochastic rollout of the global utility for meta-policy z.

    groups maps group id -> (n_k, M) context matrix of its members.
    """
    z = check_meta_policy(np.asarray(z, dtype=float))
    n_resources = z.shape[1]
    preds = _group_predictions(groups, model, n_resources)
    sizes = {k: preds[k].shape[1] for k in preds}
    assignment = draw_assignment(z, sizes, rng)
    return utility_of_assignment(z, assignment, preds)


def _batch_utilities(z_batch: np.ndarray, preds: dict, rollouts: int, rng) -> np.ndarray:
    """(S, B) rollout utilities for a batch of S meta-policies."""
    S = z_batch.shape[0]
    B = rollouts
    total = np.zeros(S * B)
    rows = np.arange(S * B)
    for k in sorted(preds):
        pv = preds[k]  # (R, n_k)
        n_k = pv.shape[1]
        if n_k == 0:
            continue
        counts = np.floor(z_batch[:, k, :] * n_k).astype(int)  # (S, R)
        starts = np.concatenate(
            [np.zeros((S, 1), dtype=int), np.cumsum(counts, axis=1)[:, :-1]], axis=1
        )
        perm = np.argsort(rng.random((S * B, n_k)), axis=1)
        for r in range(pv.shape[0]):
            n_idx = np.repeat(counts[:, r], B)
            if not n_idx.any():
                continue
            s_idx = np.repeat(starts[:, r], B)
            permuted = pv[r][perm]
            csum = np.concatenate([np.zeros((S * B, 1)), np.cumsum(permuted, axis=1)], axis=1)
            seg = csum[rows, s_idx + n_idx] - csum[rows, s_idx]
            means = np.where(n_idx > 0, seg / np.maximum(n_idx, 1), 0.0)
            total += np.repeat(z_batch[:, k, r], B) * means
    return total.reshape(S, B)


def score_candidates(mu: np.ndarray, sigma: np.ndarray, beta: float) -> np.ndarray:
    """UCB acquisition over candidate meta-policies."""
    return np.asarray(mu, dtype=float) + beta * np.asarray(sigma, dtype=float)


def meta_optimize(cfg: MetaOptimizerConfig, groups: dict[int, np.ndarray], model, rng,
                  n_resources: int | None = None):
    """Simplex search for the best sub-budget meta-policy.

    Evaluates an initial batch, then repeatedly samples a candidate set,
    scores each by mean + beta_t * std over B rollouts, records a fresh
    evaluation of the acquisition argmax, and finally returns the recorded
    policy with the highest evaluated utility (plus the full record).
    """
    keys = sorted(groups)
    if keys != list(range(len(keys))):
        raise ValueError("groups must be keyed 0..K-1")
    if n_resources is None:
        raise ValueError("n_resources is required")
    K, R = len(keys), int(n_resources)
    dim = K * R
    preds = _group_predictions(groups, model, R)

    def sample_batch(count):
        return np.stack([sample_sub_simplex(dim, rng).reshape(K, R) for _ in range(count)])

    def evaluate(z_batch):
        utils = _batch_utilities(z_batch, preds, cfg.rollouts, rng)
        return utils.mean(axis=1), utils.std(axis=1)

    init = sample_batch(cfg.initial_policies)
    mu0, sig0 = evaluate(init)
    record = [MetaEvaluation(init[j], float(mu0[j]), float(sig0[j]), float(mu0[j]))
              for j in range(cfg.initial_policies)]

    for t_m in range(cfg.initial_policies + 1, cfg.meta_iterations + 1):
        candidates = sample_batch(cfg.candidate_set_size)
        mu, sigma = evaluate(candidates)
        beta = cfg.beta_schedule.value(t_m)
        scores = score_candidates(mu, sigma, beta)
        j = int(np.argmax(scores))
        mu_sel, sig_sel = evaluate(candidates[j][None, :, :])
        record.append(
            MetaEvaluation(candidates[j], float(mu_sel[0]), float(sig_sel[0]), float(scores[j]))
        )
    best = int(np.argmax([ev.mu for ev in record]))
    return record[best].policy, record


def base_allocate(z: np.ndarray, eligible, groups_of: np.ndarray, contexts: np.ndarray,
                  model, beta: float, remaining_budgets, t: int,
                  cell_counts: dict | None = None):
    """Expand a meta-policy into this round's action set.

    Per cell (k, r) with z > 0: target count floor(z[k, r] * |I_k|) over the
    currently eligible group members, ranked by prediction + beta *
    uncertainty. The union is resolved greedily by score so an individual
    topping several cells goes to the highest-scoring one (no backfill),
    and per-resource budgets are never exceeded.

    Returns (actions, predictions, capped) where capped flags cells whose
    target was cut by the budget.
    """
    z = check_meta_policy(np.asarray(z, dtype=float))
    cell_counts = cell_counts or {}
    eligible = sorted(eligible)
    if not eligible:
        return [], {}, []
    eligible_set = set(eligible)
    members_by_group: dict[int, list[int]] = {}
    for i in sorted({i for i, _ in eligible}):
        members_by_group.setdefault(int(groups_of[i]), []).append(i)

    linear_width = model.kind in ("ridge", "logistic")
    width_cache: dict[int, float] = {}
    if linear_width:
        all_members = sorted({i for i, _ in eligible})
        widths = model.confidence_width_batch(contexts[all_members])
        width_cache = {i: float(w) for i, w in zip(all_members, widths)}

    pool: list[tuple[int, ScoredCandidate]] = []  # (group, candidate)
    targets: dict[tuple[int, int], int] = {}
    for k in sorted(members_by_group):
        members = members_by_group[k]
        for r in range(z.shape[1]):
            if z[k, r] <= 0.0:
                continue
            n_target = int(math.floor(z[k, r] * len(members)))
            if n_target <= 0:
                continue
            cands = [i for i in members if (i, r) in eligible_set]
            if not cands:
                continue
            preds = model.predict_batch(contexts[cands], r)
            if linear_width:
                uncs = np.asarray([width_cache[i] for i in cands])
            else:
                u = uncertainty(model, None, cell_counts.get((k, r), 0.0), t)
                uncs = np.full(len(cands), u)
            scores = preds + beta * uncs
            ranked = sorted(zip(scores, cands, preds, uncs), key=lambda s: (-s[0], s[1]))
            targets[(k, r)] = n_target
            for score, i, pred, unc in ranked[:n_target]:
                pool.append((k, ScoredCandidate(i, r, float(pred), float(unc), float(score))))

    pool.sort(key=lambda entry: (-entry[1].score, entry[1].individual, entry[1].resource))
    actions, predictions = [], {}
    used: set[int] = set()
    cell_used: dict[tuple[int, int], int] = {}
    res_used: dict[int, int] = {}
    capped: list[tuple[int, int]] = []
    for k, cand in pool:
        i, r = cand.individual, cand.resource
        if i in used:
            continue
        if cell_used.get((k, r), 0) >= targets[(k, r)]:
            continue
        if res_used.get(r, 0) >= remaining_budgets[r]:
            if (k, r) not in capped:
                capped.append((k, r))
            continue
        actions.append((i, r))
        predictions[(i, r)] = cand.predicted
        used.add(i)
        cell_used[(k, r)] = cell_used.get((k, r), 0) + 1
        res_used[r] = res_used.get(r, 0) + 1
    return sorted(actions), predictions, capped


class MetaCubPolicy(Policy):
    """Per-cohort meta-level simplex search composed with per-round
    base-level selection; kernel-aware credit assignment."""

    name = "metacub"
    uses_model = True
    default_attribution = "kernel"

    def __init__(self, optimizer: MetaOptimizerConfig | dict | None = None,
                 beta: ExplorationSchedule | None = None, refit_every: int = 25,
                 attribution=None):
        super().__init__(attribution)
        if isinstance(optimizer, dict):
            optimizer = MetaOptimizerConfig(**optimizer)
        self.optimizer = optimizer or MetaOptimizerConfig()
        self.beta = beta or ExplorationSchedule()
        self.refit_every = int(refit_every)

    def _reset(self):
        self.model = self.ctx.model
        if self.model is None:
            raise ValueError("metacub requires a fitted outcome model")
        self.cell_counts: dict[tuple[int, int], float] = {}
        self.zstar: np.ndarray | None = None
        self.meta_policies: list[tuple[int, np.ndarray]] = []  # (cohort, z*)
        self._dirty = False

    def _replan(self, t: int) -> None:
        cohort = self.ctx.schedule.active_members(t)
        groups = {k: [] for k in range(self.ctx.n_groups)}
        for i in cohort:
            groups[int(self.ctx.groups[i])].append(i)
        group_contexts = {
            k: self.ctx.contexts[members] if members else np.zeros((0, self.ctx.contexts.shape[1]))
            for k, members in groups.items()
        }
        self.zstar, _ = meta_optimize(
            self.optimizer, group_contexts, self.model, self.ctx.meta_rng,
            n_resources=self.ctx.n_resources,
        )
        self.meta_policies.append((self.ctx.schedule.active_index(t), self.zstar))

    def select(self, view, eligible):
        t = view.round
        if self.zstar is None or self.ctx.schedule.is_block_start(t):
            self._replan(t)
        if not eligible:
            self.last_predictions = {}
            return self._record(t, [])
        actions, predictions, _ = base_allocate(
            self.zstar, eligible, self.ctx.groups, self.ctx.contexts, self.model,
            self.beta.value(t), view.remaining_budgets, t, self.cell_counts,
        )
        self.last_predictions = predictions
        return self._record(t, actions)

    def _credit(self, i, r, value, weight):
        self.model.add_observation(self.ctx.contexts[i], value, weight)
        key = (int(self.ctx.groups[i]), r)
        self.cell_counts[key] = self.cell_counts.get(key, 0.0) + weight
        self._dirty = True

    def _after_observe(self, t):
        if self._dirty and t % self.refit_every == 0:
            self.model.refit()
            self._dirty = False
