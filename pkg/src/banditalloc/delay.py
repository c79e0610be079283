"""Delay kernels and the delayed-reward ledger.

One allocation's reward is spread over future rounds by a per-resource
kernel: a length-T nonnegative weight vector with unit mass, obtained by
discretizing a Beta density on [0, 1] into T equal-width bins. Bin masses
are differences of the regularized incomplete beta function, which is
evaluated with a modified-Lentz continued fraction (symmetry-reduced) so
that adjacent-bin differences keep full precision even for very narrow
bins. The ledger accumulates scheduled reward per round; mass that would
land past the horizon is dropped and tallied, never silently lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_CF_MAX_ITER = 300
_CF_EPS = 1e-14
_TINY = 1e-300


@dataclass(frozen=True)
class BetaParams:
    """Shape parameters of one Beta delay profile."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError(f"alpha must be a positive finite real, got {self.alpha!r}")
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"beta must be a positive finite real, got {self.beta!r}")


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise RuntimeError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_beta_cdf(z: float, p: BetaParams) -> float:
    """Regularized incomplete beta function I_z(alpha, beta).

    Monotone nondecreasing in z with I_0 = 0 and I_1 = 1. Uses the
    symmetry I_z(a, b) = 1 - I_{1-z}(b, a) to keep the continued fraction
    in its fast-converging region.
    """
    if not (isinstance(z, (int, float)) and math.isfinite(z)):
        raise ValueError(f"z must be a finite real in [0, 1], got {z!r}")
    if z < 0.0 or z > 1.0:
        raise ValueError(f"z must lie in [0, 1], got {z!r}")
    a, b = p.alpha, p.beta
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(z)
        + b * math.log1p(-z)
    )
    front = math.exp(ln_front)
    if z < (a + 1.0) / (a + b + 2.0):
        val = front * _betacf(a, b, z) / a
    else:
        val = 1.0 - front * _betacf(b, a, 1.0 - z) / b
    # clamp fp overshoot at the boundaries
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class DelayKernel:
    """Per-resource temporal weight vector over offsets 0..T-1."""

    resource: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("kernel weights must be a nonempty 1-D vector")
        if np.any(w < 0.0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"kernel weights must sum to 1, got {w.sum()!r}")

    @property
    def horizon(self) -> int:
        return int(self.weights.size)


def make_delay_kernel(p: BetaParams, horizon: int, resource: int = 0) -> DelayKernel:
    """Discretize Beta(alpha, beta) into `horizon` equal-width bins.

    weights[tau] = I_{(tau+1)/T} - I_{tau/T}, renormalized so the sum is
    exactly 1 despite fp rounding in the differences.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    edges = [regularized_beta_cdf(tau / horizon, p) for tau in range(horizon + 1)]
    w = np.diff(np.asarray(edges, dtype=float))
    w = np.clip(w, 0.0, None)
    total = float(w.sum())
    if total <= 0.0:
        raise RuntimeError(f"degenerate kernel mass for alpha={p.alpha}, beta={p.beta}")
    return DelayKernel(resource=resource, weights=w / total)


def make_mixture_kernel(
    components: list[tuple[float, BetaParams]], horizon: int, resource: int = 0
) -> DelayKernel:
    """Convex combination of Beta kernels with the given mixture weights."""
    if not components:
        raise ValueError("mixture needs at least one component")
    mix = np.asarray([w for w, _ in components], dtype=float)
    if np.any(mix < 0.0):
        raise ValueError("mixture weights must be nonnegative")
    if abs(float(mix.sum()) - 1.0) > 1e-9:
        raise ValueError(f"mixture weights must sum to 1, got {mix.sum()!r}")
    w = np.zeros(horizon)
    for cw, params in components:
        w += cw * make_delay_kernel(params, horizon, resource).weights
    total = float(w.sum())
    return DelayKernel(resource=resource, weights=w / total)


def immediate_kernel(horizon: int, resource: int = 0) -> DelayKernel:
    """Delta kernel: the full reward is observed in the allocation round."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    w = np.zeros(horizon)
    w[0] = 1.0
    return DelayKernel(resource=resource, weights=w)


@dataclass
class RewardLedger:
    """Pending/realized delayed rewards over rounds 1..horizon.

    Posting an allocation spreads base_reward * kernel over future rounds;
    mass landing past the horizon is dropped and counted in `lost_mass`.
    Each round can be realized exactly once.
    """

    horizon: int
    lost_mass: float = 0.0
    total_posted: float = 0.0
    _scheduled: np.ndarray = field(init=False, repr=False)
    _consumed: np.ndarray = field(init=False, repr=False)
    _postings: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        self._scheduled = np.zeros(self.horizon + 1)  # 1-indexed rounds
        self._consumed = np.zeros(self.horizon + 1, dtype=bool)

    @property
    def scheduled(self) -> dict[int, float]:
        """Nonzero scheduled mass by round (diagnostic view)."""
        return {
            t: float(self._scheduled[t])
            for t in range(1, self.horizon + 1)
            if self._scheduled[t] != 0.0
        }

    def post(self, t_alloc: int, base_reward: float, kernel: DelayKernel, tag=None) -> None:
        if not 1 <= t_alloc <= self.horizon:
            raise ValueError(f"allocation round {t_alloc} outside [1, {self.horizon}]")
        if base_reward == 0.0:
            return
        w = kernel.weights
        keep = min(w.size, self.horizon - t_alloc + 1)
        self._scheduled[t_alloc : t_alloc + keep] += base_reward * w[:keep]
        self.lost_mass += base_reward * float(w[keep:].sum())
        self.total_posted += base_reward
        self._postings.append((t_alloc, base_reward, kernel, tag))

    def realize(self, t: int) -> float:
        if not 1 <= t <= self.horizon:
            raise ValueError(f"round {t} outside [1, {self.horizon}]")
        if self._consumed[t]:
            raise RuntimeError(f"round {t} already realized")
        self._consumed[t] = True
        return float(self._scheduled[t])

    def contributions(self, t: int) -> list[tuple[object, float]]:
        """(tag, amount) pairs for postings whose mass lands in round t."""
        out = []
        for (u, base, kernel, tag) in self._postings:
            tau = t - u
            if 0 <= tau < kernel.weights.size and kernel.weights[tau] > 0.0:
                out.append((tag, base * float(kernel.weights[tau])))
        return out


def _event_fields(event) -> tuple[int, int, float]:
    if isinstance(event, tuple):
        return int(event[0]), int(event[1]), float(event[2])
    return int(event.round), int(event.resource), float(event.base_reward)


def brute_force_reward(history, kernels: dict[int, DelayKernel], t: int) -> float:
    """Direct double-sum of all past allocations' mass landing at round t.

    Test oracle for the incremental ledger; accepts (round, resource,
    base_reward) triples or any objects exposing those attributes.
    """
    total = 0.0
    for event in history:
        u, r, base = _event_fields(event)
        tau = t - u
        w = kernels[r].weights
        if 0 <= tau < w.size:
            total += base * float(w[tau])
    return total


def kernel_csv_rows(kernel: DelayKernel):
    """(resource, tau, weight) rows for report serialization."""
    for tau, w in enumerate(kernel.weights):
        yield kernel.resource, tau, float(w)
