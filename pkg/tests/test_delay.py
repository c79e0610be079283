import numpy as np
import pytest
from scipy import special

from banditalloc.delay import (
    BetaParams,
    DelayKernel,
    RewardLedger,
    brute_force_reward,
    immediate_kernel,
    make_delay_kernel,
    make_mixture_kernel,
    regularized_beta_cdf,
)

GRID_AB = [(a, b) for a in (0.5, 1.0, 2.0, 5.0) for b in (0.5, 1.0, 2.0, 5.0)]


class TestRegularizedBetaCdf:
    def test_uniform_midpoint(self):
        assert regularized_beta_cdf(0.5, BetaParams(1, 1)) == pytest.approx(0.5, abs=1e-12)

    def test_total_mass(self):
        assert regularized_beta_cdf(1.0, BetaParams(3.7, 0.2)) == 1.0

    def test_closed_form_z_squared(self):
        # Beta(2,1) has density 2z, so I_z = z^2
        assert regularized_beta_cdf(0.5, BetaParams(2, 1)) == pytest.approx(0.25, abs=1e-12)

    def test_symmetric_beta22(self):
        assert regularized_beta_cdf(0.5, BetaParams(2, 2)) == pytest.approx(0.5, abs=1e-12)

    def test_endpoints(self):
        for a, b in GRID_AB:
            assert regularized_beta_cdf(0.0, BetaParams(a, b)) == 0.0
            assert regularized_beta_cdf(1.0, BetaParams(a, b)) == 1.0

    def test_against_scipy_oracle(self):
        zs = np.linspace(0.0, 1.0, 201)
        for a, b in GRID_AB:
            ours = np.array([regularized_beta_cdf(float(z), BetaParams(a, b)) for z in zs])
            ref = special.betainc(a, b, zs)
            assert np.max(np.abs(ours - ref)) < 1e-10

    def test_monotone_on_fine_grid(self):
        zs = np.arange(0.0, 1.0 + 1e-12, 1e-3)
        for a, b in GRID_AB:
            vals = [regularized_beta_cdf(float(z), BetaParams(a, b)) for z in zs]
            assert all(v2 >= v1 for v1, v2 in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            regularized_beta_cdf(-0.1, BetaParams(1, 1))
        with pytest.raises(ValueError):
            regularized_beta_cdf(1.1, BetaParams(1, 1))
        with pytest.raises(ValueError):
            regularized_beta_cdf(float("nan"), BetaParams(1, 1))

    def test_parameter_errors(self):
        with pytest.raises(ValueError):
            BetaParams(0.0, 1.0)
        with pytest.raises(ValueError):
            BetaParams(1.0, -2.0)


class TestMakeDelayKernel:
    def test_uniform_bins(self):
        k = make_delay_kernel(BetaParams(1, 1), 4)
        np.testing.assert_allclose(k.weights, [0.25] * 4, atol=1e-12)

    def test_linear_density_two_bins(self):
        # integral of 2z over [0, .5] and [.5, 1]
        k = make_delay_kernel(BetaParams(2, 1), 2)
        np.testing.assert_allclose(k.weights, [0.25, 0.75], atol=1e-9)

    def test_symmetric_two_bins(self):
        k = make_delay_kernel(BetaParams(2, 2), 2)
        np.testing.assert_allclose(k.weights, [0.5, 0.5], atol=1e-12)

    @pytest.mark.parametrize("horizon", [1, 8, 64])
    def test_grid_invariants(self, horizon):
        for a, b in GRID_AB:
            k = make_delay_kernel(BetaParams(a, b), horizon)
            assert k.weights.size == horizon
            assert np.all(k.weights >= 0.0)
            assert abs(float(k.weights.sum()) - 1.0) < 1e-9

    def test_alpha_below_one_concentrates_early(self):
        k = make_delay_kernel(BetaParams(0.5, 5.0), 16)
        assert k.weights[0] > np.max(k.weights[1:])

    def test_invalid_params_propagate(self):
        with pytest.raises(ValueError):
            make_delay_kernel(BetaParams(1, 1), 0)


class TestMixtureKernel:
    def test_degenerate_single_component(self):
        k = make_mixture_kernel([(1.0, BetaParams(1, 1))], 4)
        np.testing.assert_allclose(k.weights, make_delay_kernel(BetaParams(1, 1), 4).weights)

    def test_mirror_average(self):
        k = make_mixture_kernel([(0.5, BetaParams(2, 1)), (0.5, BetaParams(1, 2))], 2)
        np.testing.assert_allclose(k.weights, [0.5, 0.5], atol=1e-9)

    def test_identical_components(self):
        k = make_mixture_kernel([(0.5, BetaParams(2, 2)), (0.5, BetaParams(2, 2))], 2)
        np.testing.assert_allclose(k.weights, [0.5, 0.5], atol=1e-9)

    def test_weight_sum_violation(self):
        with pytest.raises(ValueError):
            make_mixture_kernel([(0.5, BetaParams(1, 1)), (0.4, BetaParams(2, 2))], 4)


class TestImmediateKernel:
    def test_single_round(self):
        np.testing.assert_array_equal(immediate_kernel(1).weights, [1.0])

    def test_delta_shape(self):
        np.testing.assert_array_equal(immediate_kernel(5).weights, [1, 0, 0, 0, 0])

    def test_delta_realizes_at_allocation_round(self):
        ledger = RewardLedger(horizon=5)
        ledger.post(3, 0.7, immediate_kernel(5))
        assert ledger.realize(3) == pytest.approx(0.7)
        assert ledger.realize(4) == 0.0


class TestRewardLedger:
    def kernel_25_75(self):
        return DelayKernel(resource=0, weights=np.array([0.25, 0.75]))

    def test_post_spreads_mass(self):
        ledger = RewardLedger(horizon=2)
        ledger.post(1, 1.0, self.kernel_25_75())
        assert ledger.scheduled == pytest.approx({1: 0.25, 2: 0.75})
        assert ledger.lost_mass == 0.0

    def test_post_truncates_past_horizon(self):
        ledger = RewardLedger(horizon=2)
        ledger.post(2, 1.0, self.kernel_25_75())
        assert ledger.scheduled == pytest.approx({2: 0.25})
        assert ledger.lost_mass == pytest.approx(0.75)

    def test_zero_reward_is_noop(self):
        ledger = RewardLedger(horizon=2)
        ledger.post(1, 0.0, self.kernel_25_75())
        assert ledger.scheduled == {}
        assert ledger.total_posted == 0.0

    def test_realize_consumes_once(self):
        ledger = RewardLedger(horizon=2)
        ledger.post(1, 1.0, self.kernel_25_75())
        assert ledger.realize(1) == pytest.approx(0.25)
        with pytest.raises(RuntimeError):
            ledger.realize(1)

    def test_realize_empty_round(self):
        ledger = RewardLedger(horizon=3)
        assert ledger.realize(2) == 0.0

    def test_post_round_domain(self):
        ledger = RewardLedger(horizon=2)
        with pytest.raises(ValueError):
            ledger.post(0, 1.0, self.kernel_25_75())
        with pytest.raises(ValueError):
            ledger.post(3, 1.0, self.kernel_25_75())

    def test_conservation_simple(self):
        ledger = RewardLedger(horizon=4)
        kernel = make_delay_kernel(BetaParams(2, 5), 4)
        for t, base in [(1, 0.3), (2, 1.1), (4, 0.8)]:
            ledger.post(t, base, kernel)
        realized = sum(ledger.realize(t) for t in range(1, 5))
        assert realized + ledger.lost_mass == pytest.approx(ledger.total_posted, abs=1e-9)


def _random_history(rng, horizon, n_events, kernels):
    history = []
    for _ in range(n_events):
        t = int(rng.integers(1, horizon + 1))
        r = int(rng.integers(0, len(kernels)))
        base = float(rng.uniform(-0.5, 2.0))
        history.append((t, r, base))
    return history


class TestLedgerOracleEquivalence:
    def test_empty_history(self):
        kernels = {0: immediate_kernel(10)}
        assert brute_force_reward([], kernels, 5) == 0.0

    def test_single_event_matches_post(self):
        kernels = {0: DelayKernel(resource=0, weights=np.array([0.25, 0.75]))}
        ledger = RewardLedger(horizon=2)
        ledger.post(1, 1.0, kernels[0])
        assert brute_force_reward([(1, 0, 1.0)], kernels, 1) == pytest.approx(ledger.realize(1), abs=1e-12)

    def test_randomized_histories(self):
        rng = np.random.default_rng(1234)
        for trial in range(30):
            horizon = int(rng.integers(1, 51))
            kernels = {
                r: make_delay_kernel(
                    BetaParams(float(rng.uniform(0.4, 5.0)), float(rng.uniform(0.4, 5.0))),
                    horizon,
                    resource=r,
                )
                for r in range(3)
            }
            history = _random_history(rng, horizon, int(rng.integers(0, 120)), kernels)
            ledger = RewardLedger(horizon=horizon)
            for (t, r, base) in history:
                ledger.post(t, base, kernels[r])
            realized_total = 0.0
            for t in range(1, horizon + 1):
                got = ledger.realize(t)
                want = brute_force_reward(history, kernels, t)
                assert got == pytest.approx(want, abs=1e-12)
                realized_total += got
            posted = sum(base for _, _, base in history)
            assert realized_total + ledger.lost_mass == pytest.approx(posted, abs=1e-9)

    def test_contributions_sum_to_realized(self):
        rng = np.random.default_rng(7)
        horizon = 20
        kernel = make_delay_kernel(BetaParams(2, 3), horizon)
        ledger = RewardLedger(horizon=horizon)
        for _ in range(15):
            ledger.post(int(rng.integers(1, horizon + 1)), float(rng.uniform(0, 1)), kernel, tag="e")
        for t in range(1, horizon + 1):
            contrib = sum(amount for _, amount in ledger.contributions(t))
            assert contrib == pytest.approx(ledger.realize(t), abs=1e-12)
