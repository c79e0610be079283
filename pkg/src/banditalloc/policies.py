"""Baseline allocation policies behind one interface.

Every policy implements select(view, eligible) -> action list and
observe(round, y, contributions). Delay-agnostic baselines credit the
round's blended reward y(t) to the action(s) they just took (naive
attribution, split equally across a set); delay-aware policies credit each
allocation as its kernel mass realizes, so one allocation's attribution
weights sum to the kernel mass inside the horizon. Tie-breaking is stable
ascending (individual, resource) everywhere for bitwise reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import greedy_feasible_actions
from .models import uncertainty


@dataclass(frozen=True)
class ExplorationSchedule:
    """beta_t = scale * sqrt(ln max(t, 2)), or a constant."""

    kind: str = "sqrt-log"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sqrt-log", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def value(self, t: float) -> float:
        if self.kind == "constant":
            return self.scale
        return self.scale * math.sqrt(math.log(max(t, 2)))


@dataclass
class RunContext:
    """Read-only per-run wiring handed to a policy at start_run."""

    contexts: np.ndarray  # (N, M)
    groups: np.ndarray  # (N,)
    n_groups: int
    resources: list
    kernels: dict
    schedule: object
    horizon: int
    model: object = None
    rng: np.random.Generator = None
    meta_rng: np.random.Generator = None
    outcome_bounds: tuple = (0.0, 1.0)
    true_means: np.ndarray = None  # oracle ground truth; None for learners

    @property
    def n_resources(self) -> int:
        return len(self.resources)

    @property
    def n_individuals(self) -> int:
        return self.contexts.shape[0]


class Policy:
    """Base: arm bookkeeping plus the two credit-assignment modes."""

    name = "policy"
    uses_model = False
    default_regimes = ("immediate", "delayed")
    default_attribution = "naive"

    def __init__(self, attribution: str | None = None):
        if attribution is not None and attribution not in ("naive", "kernel"):
            raise ValueError(f"unknown attribution mode {attribution!r}")
        self.attribution = attribution or self.default_attribution

    def start_run(self, ctx: RunContext) -> None:
        self.ctx = ctx
        self._last_round = 0
        self._last_actions: list[tuple[int, int]] = []
        self._reset()

    def _reset(self) -> None:
        pass

    def _arm(self, i: int, r: int) -> int:
        return i * self.ctx.n_resources + r

    def select(self, view, eligible):
        raise NotImplementedError

    def observe(self, t: int, y: float, contributions) -> None:
        if self.attribution == "kernel":
            for event, amount in contributions:
                tau = t - event.round
                w = float(self.ctx.kernels[event.resource].weights[tau])
                if w > 0.0:
                    self._credit(event.individual, event.resource, amount / w, w)
            self._after_observe(t)
        else:
            if self._last_round == t and self._last_actions:
                share = y / len(self._last_actions)
                for (i, r) in self._last_actions:
                    self._credit(i, r, share, 1.0)
            self._after_observe(t)

    def _credit(self, i: int, r: int, value: float, weight: float) -> None:
        pass

    def _after_observe(self, t: int) -> None:
        pass

    def _record(self, t: int, actions) -> list[tuple[int, int]]:
        self._last_round = t
        self._last_actions = list(actions)
        return self._last_actions


class _StatsPolicy(Policy):
    """Shared per-arm (count, sum) state for the index policies."""

    def _reset(self):
        n_arms = self.ctx.n_individuals * self.ctx.n_resources
        self.pulls = np.zeros(n_arms)
        self.sums = np.zeros(n_arms)

    def _credit(self, i, r, value, weight):
        a = self._arm(i, r)
        self.pulls[a] += weight
        self.sums[a] += value * weight

    def _ucb_scores(self, t, arms):
        counts = self.pulls[arms]
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = self.sums[arms] / counts + np.sqrt(2.0 * math.log(t) / counts)
        return counts, scores


def _first_unpulled(counts) -> int | None:
    mask = counts <= 0.0
    return int(np.argmax(mask)) if mask.any() else None


class UCBPolicy(_StatsPolicy):
    """Classical UCB over (individual, resource) arms; context-free."""

    name = "ucb"

    def select(self, view, eligible):
        if not eligible:
            return self._record(view.round, [])
        eligible = sorted(eligible)
        t = view.round
        arms = np.asarray([self._arm(i, r) for i, r in eligible])
        counts, scores = self._ucb_scores(t, arms)
        j = _first_unpulled(counts)
        if j is None:
            j = int(np.argmax(scores))
        return self._record(t, [eligible[j]])


class CUCBPolicy(_StatsPolicy):
    """Combinatorial UCB: the top-m index arms per round, deduplicated per
    individual and capped by remaining budgets."""

    name = "cucb"
    default_regimes = ("immediate",)

    def __init__(self, set_size: int = 4, attribution=None):
        super().__init__(attribution)
        self.set_size = int(set_size)

    def select(self, view, eligible):
        if not eligible:
            return self._record(view.round, [])
        eligible = sorted(eligible)
        t = view.round
        arms = np.asarray([self._arm(i, r) for i, r in eligible])
        counts, scores = self._ucb_scores(t, arms)
        scores = np.where(counts <= 0.0, np.inf, scores)
        order = sorted(range(len(eligible)), key=lambda j: (-scores[j], eligible[j]))
        chosen, used, res_used = [], set(), {}
        for j in order:
            i, r = eligible[j]
            if i in used or res_used.get(r, 0) >= view.remaining_budgets[r]:
                continue
            chosen.append((i, r))
            used.add(i)
            res_used[r] = res_used.get(r, 0) + 1
            if len(chosen) >= self.set_size:
                break
        return self._record(t, chosen)


class DUCBPolicy(_StatsPolicy):
    """UCB with exponential decay gamma on each arm's past credit.

    An arm's older observations are downweighted by gamma per round elapsed
    between its own credits, so its effective count stays bounded by
    1/(1-gamma): gamma -> 0 keeps only the arm's latest reward (selection
    becomes last-reward argmax plus bonus) and gamma = 1 reproduces UCB
    exactly, action for action.
    """

    name = "ducb"
    default_regimes = ("delayed",)

    def __init__(self, gamma: float = 0.95, attribution=None):
        super().__init__(attribution)
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        self.gamma = float(gamma)

    def _reset(self):
        super()._reset()
        self.last_credit = np.zeros(self.pulls.size, dtype=int)

    def _credit(self, i, r, value, weight):
        a = self._arm(i, r)
        t = self._last_round
        decay = self.gamma ** (t - self.last_credit[a]) if self.pulls[a] > 0.0 else 1.0
        self.pulls[a] = self.pulls[a] * decay + weight
        self.sums[a] = self.sums[a] * decay + value * weight
        self.last_credit[a] = t

    def select(self, view, eligible):
        if not eligible:
            return self._record(view.round, [])
        eligible = sorted(eligible)
        t = view.round
        arms = np.asarray([self._arm(i, r) for i, r in eligible])
        counts = self.pulls[arms]
        j = _first_unpulled(counts)
        if j is None:
            means = self.sums[arms] / counts
            scores = means + np.sqrt(2.0 * math.log(t) / counts)
            j = int(np.argmax(scores))
        return self._record(t, [eligible[j]])


class SWUCBPolicy(Policy):
    """UCB over a sliding window of the last tau_w rounds of credit.

    tau_w >= T reproduces UCB exactly, action for action.
    """

    name = "swucb"
    default_regimes = ("delayed",)

    def __init__(self, window: int = 50, attribution=None):
        super().__init__(attribution)
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.window = int(window)

    def _reset(self):
        n_arms = self.ctx.n_individuals * self.ctx.n_resources
        self.obs: list[list[tuple[int, float, float]]] = [[] for _ in range(n_arms)]

    def _credit(self, i, r, value, weight):
        self.obs[self._arm(i, r)].append((self._last_round, value, weight))

    def select(self, view, eligible):
        if not eligible:
            return self._record(view.round, [])
        eligible = sorted(eligible)
        t = view.round
        lo = t - self.window  # keep credit from rounds >= lo
        log_term = math.log(min(t, self.window)) if min(t, self.window) > 1 else 0.0
        best_j, best_score = None, None
        for j, (i, r) in enumerate(eligible):
            rows = self.obs[self._arm(i, r)]
            while rows and rows[0][0] < lo:
                rows.pop(0)
            n = sum(w for _, _, w in rows)
            if n <= 0.0:
                best_j = j  # first windowed-unpulled arm wins outright
                break
            mean = sum(v * w for _, v, w in rows) / n
            score = mean + math.sqrt(2.0 * log_term / n)
            if best_score is None or score > best_score:
                best_j, best_score = j, score
        return self._record(t, [eligible[best_j]])


class LinUCBPolicy(Policy):
    """Disjoint LinUCB with one ridge state per resource arm; contexts vary
    by individual."""

    name = "linucb"

    def __init__(self, alpha_lin: float = 1.0, attribution=None):
        super().__init__(attribution)
        self.alpha_lin = float(alpha_lin)

    def _reset(self):
        m = self.ctx.contexts.shape[1]
        n_res = self.ctx.n_resources
        self.A = [np.eye(m) for _ in range(n_res)]
        self.b = [np.zeros(m) for _ in range(n_res)]
        self._inv = [None] * n_res

    def _inv_of(self, r):
        if self._inv[r] is None:
            self._inv[r] = np.linalg.inv(self.A[r])
        return self._inv[r]

    def _credit(self, i, r, value, weight):
        x = self.ctx.contexts[i]
        self.A[r] += weight * np.outer(x, x)
        self.b[r] += weight * value * x
        self._inv[r] = None

    def select(self, view, eligible):
        if not eligible:
            return self._record(view.round, [])
        eligible = sorted(eligible)
        scores = np.empty(len(eligible))
        by_res: dict[int, list[int]] = {}
        for j, (i, r) in enumerate(eligible):
            by_res.setdefault(r, []).append(j)
        for r, idx in by_res.items():
            inv = self._inv_of(r)
            theta = inv @ self.b[r]
            X = self.ctx.contexts[[eligible[j][0] for j in idx]]
            widths = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", X, inv, X), 0.0, None))
            scores[idx] = X @ theta + self.alpha_lin * widths
        j = int(np.argmax(scores))
        return self._record(view.round, [eligible[j]])


class Exp3Policy(Policy):
    """Adversarial exponential weighting over (individual, resource) arms
    with importance-weighted updates; rewards rescaled to [0, 1]."""

    name = "exp3"

    def __init__(self, eta: float = 0.05, attribution=None):
        super().__init__(attribution)
        self.eta = float(eta)

    def _reset(self):
        n_arms = self.ctx.n_individuals * self.ctx.n_resources
        self.weights = np.ones(n_arms)
        self._pending = None  # (arm, prob, n_eligible)
        self.clipped = 0

    def sampling_probabilities(self, eligible):
        arms = np.asarray([self._arm(i, r) for i, r in eligible])
        w = self.weights[arms]
        return (1.0 - self.eta) * w / w.sum() + self.eta / len(eligible)

    def select(self, view, eligible):
        if not eligible:
            self._pending = None
            return self._record(view.round, [])
        eligible = sorted(eligible)
        probs = self.sampling_probabilities(eligible)
        j = int(self.ctx.rng.choice(len(eligible), p=probs / probs.sum()))
        i, r = eligible[j]
        self._pending = (self._arm(i, r), float(probs[j]), len(eligible))
        return self._record(view.round, [eligible[j]])

    def observe(self, t, y, contributions):
        if self._last_round != t or self._pending is None:
            return
        arm, prob, n_eligible = self._pending
        lo, hi = self.ctx.outcome_bounds
        scaled = (y - lo) / (hi - lo)
        if scaled < 0.0 or scaled > 1.0:
            self.clipped += 1
            scaled = min(1.0, max(0.0, scaled))
        estimate = scaled / prob
        self.weights[arm] *= math.exp(self.eta * estimate / n_eligible)
        if self.weights.max() > 1e100:
            self.weights /= self.weights.max()
        self._pending = None


class MExp3Policy(Policy):
    """EXP3 over a fixed catalog of meta-allocation policies; the sampled
    entry is expanded to a full action set by random within-group selection
    subject to eligibility."""

    name = "mexp3"
    default_regimes = ("immediate",)

    def __init__(self, eta: float = 0.05, n_meta_arms: int = 16, attribution=None):
        super().__init__(attribution)
        self.eta = float(eta)
        self.n_meta_arms = int(n_meta_arms)
        if self.n_meta_arms < 1:
            raise ValueError("catalog needs at least one meta-arm")

    def _reset(self):
        from .metacub import sample_sub_simplex  # policy catalog sampler

        dim = self.ctx.n_groups * self.ctx.n_resources
        self.catalog = [
            sample_sub_simplex(dim, self.ctx.rng).reshape(self.ctx.n_groups,
                                                          self.ctx.n_resources)
            for _ in range(self.n_meta_arms)
        ]
        self.weights = np.ones(self.n_meta_arms)
        self._pending = None
        self.clipped = 0

    def _expand(self, z, view, eligible):
        eligible_set = set(eligible)
        group_members: dict[int, list[int]] = {}
        for i in sorted({i for i, _ in eligible}):
            group_members.setdefault(int(self.ctx.groups[i]), []).append(i)
        actions, used, res_used = [], set(), {}
        for k in sorted(group_members):
            members = group_members[k]
            for r in range(self.ctx.n_resources):
                target = int(math.floor(z[k, r] * len(members)))
                if target <= 0:
                    continue
                cands = [i for i in members
                         if i not in used and (i, r) in eligible_set]
                budget_room = view.remaining_budgets[r] - res_used.get(r, 0)
                n = min(target, len(cands), budget_room)
                if n <= 0:
                    continue
                picked = self.ctx.rng.choice(len(cands), size=n, replace=False)
                for idx in sorted(int(p) for p in picked):
                    actions.append((cands[idx], r))
                    used.add(cands[idx])
                res_used[r] = res_used.get(r, 0) + n
        return sorted(actions)

    def select(self, view, eligible):
        if not eligible:
            self._pending = None
            return self._record(view.round, [])
        eligible = sorted(eligible)
        probs = (1.0 - self.eta) * self.weights / self.weights.sum() \
            + self.eta / self.n_meta_arms
        j = int(self.ctx.rng.choice(self.n_meta_arms, p=probs / probs.sum()))
        self._pending = (j, float(probs[j]))
        return self._record(view.round, self._expand(self.catalog[j], view, eligible))

    def observe(self, t, y, contributions):
        if self._last_round != t or self._pending is None:
            return
        j, prob = self._pending
        lo, hi = self.ctx.outcome_bounds
        scaled = (y - lo) / (hi - lo)
        if scaled < 0.0 or scaled > 1.0:
            self.clipped += 1
            scaled = min(1.0, max(0.0, scaled))
        self.weights[j] *= math.exp(self.eta * (scaled / prob) / self.n_meta_arms)
        if self.weights.max() > 1e100:
            self.weights /= self.weights.max()
        self._pending = None


class CCUCBPolicy(Policy):
    """Constrained contextual UCB: one allocation per round maximizing
    model prediction plus beta_t times uncertainty; kernel-aware credit."""

    name = "ccucb"
    uses_model = True
    default_attribution = "kernel"

    def __init__(self, beta: ExplorationSchedule | None = None, refit_every: int = 25,
                 attribution=None):
        super().__init__(attribution)
        self.beta = beta or ExplorationSchedule()
        self.refit_every = int(refit_every)

    def _reset(self):
        self.model = self.ctx.model
        if self.model is None:
            raise ValueError("ccucb requires a fitted outcome model")
        self.cell_counts: dict[tuple[int, int], float] = {}
        self._dirty = False

    def _scores(self, view, eligible):
        t = view.round
        beta_t = self.beta.value(t)
        individuals = sorted({i for i, _ in eligible})
        pos = {i: j for j, i in enumerate(individuals)}
        X = self.ctx.contexts[individuals]
        preds_by_res = {
            r: self.model.predict_batch(X, r)
            for r in sorted({r for _, r in eligible})
        }
        if self.model.kind in ("ridge", "logistic"):
            widths = self.model.confidence_width_batch(X)
            unc = {(i, r): float(widths[pos[i]]) for i, r in eligible}
        else:
            unc = {
                (i, r): uncertainty(
                    self.model, None,
                    self.cell_counts.get((int(self.ctx.groups[i]), r), 0.0), t,
                )
                for i, r in eligible
            }
        preds = {(i, r): float(preds_by_res[r][pos[i]]) for i, r in eligible}
        scores = {pair: preds[pair] + beta_t * unc[pair] for pair in eligible}
        return preds, scores

    def select(self, view, eligible):
        if not eligible:
            self.last_predictions = {}
            return self._record(view.round, [])
        eligible = sorted(eligible)
        preds, scores = self._scores(view, eligible)
        best = eligible[0]
        for pair in eligible[1:]:
            if scores[pair] > scores[best]:
                best = pair
        self.last_predictions = {best: preds[best]}
        return self._record(view.round, [best])

    def _credit(self, i, r, value, weight):
        self.model.add_observation(self.ctx.contexts[i], value, weight)
        key = (int(self.ctx.groups[i]), r)
        self.cell_counts[key] = self.cell_counts.get(key, 0.0) + weight
        self._dirty = True

    def _after_observe(self, t):
        if self._dirty and t % self.refit_every == 0:
            self.model.refit()
            self._dirty = False


class OraclePolicy(Policy):
    """Greedy feasible set on the true means, up to `per_round_cap` actions
    per round; the regret reference.

    The cap front-loads the oracle's spending (top picks early, little
    kernel mass truncated) without letting it burn budget on weak
    individuals the way an uncapped greedy set would.
    """

    name = "oracle"

    def __init__(self, per_round_cap: int | None = 4, attribution=None):
        super().__init__(attribution)
        self.per_round_cap = per_round_cap

    def select(self, view, eligible):
        if not eligible:
            return self._record(view.round, [])
        actions = greedy_feasible_actions(
            sorted(eligible), view.remaining_budgets, self.ctx.true_means,
            self.per_round_cap,
        )
        return self._record(view.round, actions)


POLICIES = {
    "ucb": UCBPolicy,
    "linucb": LinUCBPolicy,
    "cucb": CUCBPolicy,
    "exp3": Exp3Policy,
    "mexp3": MExp3Policy,
    "ducb": DUCBPolicy,
    "swucb": SWUCBPolicy,
    "ccucb": CCUCBPolicy,
}


def build_policy(name: str, params: dict | None = None) -> Policy:
    """Instantiate a policy by its config key (metacub included)."""
    from .metacub import MetaCubPolicy

    registry = dict(POLICIES)
    registry["metacub"] = MetaCubPolicy
    if name not in registry:
        raise ValueError(f"unknown policy key {name!r}")
    return registry[name](**(params or {}))
