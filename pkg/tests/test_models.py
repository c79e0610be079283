import math

import numpy as np
import pytest

from banditalloc.models import (
    LogisticModel,
    MlpModel,
    RidgeModel,
    _init_mlp_params,
    evaluate_model,
    fit_outcome_model,
    logistic_loss_grad,
    mlp_loss_grad,
    uncertainty,
)


class TestRidge:
    def test_recovers_noiseless_linear_weights(self):
        rng = np.random.default_rng(0)
        w_true = np.array([1.5, -0.7, 0.3, 2.0])
        X = rng.normal(size=(60, 4))
        y = X @ w_true
        model = fit_outcome_model((X, y), "ridge", lam=1e-8)
        np.testing.assert_allclose(model.weights, w_true, atol=1e-4)

    def test_closed_form_matches_iterative_least_squares(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            X = rng.normal(size=(20, 5))
            y = rng.normal(size=20)
            lam = 1.0
            model = fit_outcome_model((X, y), "ridge", lam=lam)
            # oracle: gradient descent on the same objective, i.e. ridge on
            # the weights with an unpenalized intercept
            w = np.zeros(5)
            b = 0.0
            lr = 1.0 / (np.linalg.norm(X, 2) ** 2 + X.shape[0] + lam)
            for _ in range(60000):
                resid = X @ w + b - y
                w -= lr * (X.T @ resid + lam * w)
                b -= lr * float(resid.sum())
            np.testing.assert_allclose(model.weights, w, atol=1e-6)
            assert model.intercept == pytest.approx(b, abs=1e-6)

    def test_identity_weight_prediction(self):
        model = RidgeModel(weights=np.array([1.0, 0.0, 0.0]))
        assert model.predict(np.array([0.37, 5.0, -2.0])) == pytest.approx(0.37)

    def test_prediction_deterministic(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        model = fit_outcome_model((X, y), "ridge")
        x = rng.normal(size=3)
        assert model.predict(x) == model.predict(x)

    def test_dimension_mismatch(self):
        model = RidgeModel(weights=np.zeros(3))
        with pytest.raises(ValueError):
            model.predict(np.zeros(4))

    def test_degenerate_design_without_regularization(self):
        X = np.zeros((10, 3))
        y = np.zeros(10)
        with pytest.raises(ValueError):
            fit_outcome_model((X, y), "ridge", lam=0.0)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit_outcome_model((np.ones((2, 3)), np.ones(2)), "ridge")

    def test_empty_training_set(self):
        with pytest.raises(ValueError):
            fit_outcome_model((np.zeros((0, 3)), np.zeros(0)), "ridge")

    def test_online_refit_tracks_new_data(self):
        rng = np.random.default_rng(5)
        w_true = np.array([2.0, -1.0])
        X = rng.normal(size=(40, 2))
        y = X @ w_true
        model = fit_outcome_model((X[:20], y[:20]), "ridge", lam=1e-6)
        for x_row, y_row in zip(X[20:], y[20:]):
            model.add_observation(x_row, y_row)
        model.refit()
        np.testing.assert_allclose(model.weights, w_true, atol=1e-4)


class TestLogistic:
    def test_separable_data(self):
        X = np.concatenate([np.full(20, -2.0), np.full(20, 2.0)])[:, None]
        y = np.concatenate([np.zeros(20), np.ones(20)])
        model = fit_outcome_model((X, y), "logistic", lam=1e-4)
        assert model.predict(np.array([-2.0])) < 0.01
        assert model.predict(np.array([2.0])) > 0.99

    def test_zero_weights_give_half(self):
        model = LogisticModel(weights=np.zeros(4))
        assert model.predict(np.ones(4)) == pytest.approx(0.5)

    def test_outputs_in_unit_interval(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 3))
        y = (rng.random(50) < 0.5).astype(float)
        model = fit_outcome_model((X, y), "logistic")
        preds = model.predict_batch(rng.normal(size=(200, 3)) * 10)
        assert np.all(preds >= 0.0) and np.all(preds <= 1.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        eps = 1e-5
        for _ in range(10):
            n, m = int(rng.integers(5, 15)), int(rng.integers(2, 5))
            X = rng.normal(size=(n, m))
            y = (rng.random(n) < 0.5).astype(float)
            w = rng.normal(size=m)
            lam = float(rng.uniform(0.01, 1.0))
            _, grad = logistic_loss_grad(w, X, y, lam)
            for j in range(m):
                wp, wm = w.copy(), w.copy()
                wp[j] += eps
                wm[j] -= eps
                lp, _ = logistic_loss_grad(wp, X, y, lam)
                lm, _ = logistic_loss_grad(wm, X, y, lam)
                fd = (lp - lm) / (2 * eps)
                assert grad[j] == pytest.approx(fd, rel=1e-3, abs=1e-8)


def _flatten(grads):
    gW1, gb1, gw2, gb2 = grads
    return np.concatenate([gW1.ravel(), gb1, gw2, [gb2]])


def _perturb(params, j, eps):
    W1, b1, w2 = (np.array(p, dtype=float) for p in params[:3])
    b2 = float(params[3])
    flat = np.concatenate([W1.ravel(), b1, w2, [b2]])
    flat[j] += eps
    k = W1.size
    W1 = flat[:k].reshape(W1.shape)
    b1 = flat[k : k + b1.size]
    w2 = flat[k + b1.size : k + b1.size + w2.size]
    b2 = float(flat[-1])
    return W1, b1, w2, b2


class TestMlp:
    def test_quadratic_oracle(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(-1, 1, size=(64, 1))
        y = X[:, 0] ** 2
        model = fit_outcome_model((X, y), "mlp", seed=0)
        grid = np.linspace(-1, 1, 101)[:, None]
        mse = float(np.mean((model.predict_batch(grid) - grid[:, 0] ** 2) ** 2))
        assert mse < 0.01

    def test_sigmoid_output_bounded(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 2))
        y = (X[:, 0] > 0).astype(float)
        model = fit_outcome_model((X, y), "mlp", outcome_kind="binary", seed=1)
        preds = model.predict_batch(rng.normal(size=(100, 2)) * 5)
        assert np.all((preds >= 0.0) & (preds <= 1.0))

    def test_regression_outputs_finite(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = fit_outcome_model((X, y), "mlp", seed=2)
        assert np.all(np.isfinite(model.predict_batch(rng.normal(size=(50, 2)))))

    @pytest.mark.parametrize("output", ["linear", "sigmoid"])
    def test_gradient_matches_finite_differences(self, output):
        rng = np.random.default_rng(13)
        eps = 1e-5
        for _ in range(5):
            n, m, h = int(rng.integers(4, 9)), int(rng.integers(2, 4)), 4
            X = rng.normal(size=(n, m))
            y = (rng.random(n) < 0.5).astype(float) if output == "sigmoid" else rng.normal(size=n)
            params = _init_mlp_params(m, h, rng)
            _, grads = mlp_loss_grad(params, X, y, output)
            flat_grad = _flatten(grads)
            n_params = flat_grad.size
            for j in rng.choice(n_params, size=min(12, n_params), replace=False):
                lp, _ = mlp_loss_grad(_perturb(params, j, eps), X, y, output)
                lm, _ = mlp_loss_grad(_perturb(params, j, -eps), X, y, output)
                fd = (lp - lm) / (2 * eps)
                assert flat_grad[j] == pytest.approx(fd, rel=1e-3, abs=1e-8)


class TestUncertainty:
    def test_ridge_identity_gram_unit_vector(self):
        model = RidgeModel(weights=np.zeros(3), lam=1.0)
        x = np.array([1.0, 0.0, 0.0])
        assert uncertainty(model, x, cell_count=0, t=1) == pytest.approx(1.0)

    def test_mlp_plugin_arithmetic(self):
        params = _init_mlp_params(2, 4, np.random.default_rng(0))
        model = MlpModel(params)
        t = math.e ** 2
        assert uncertainty(model, np.zeros(2), cell_count=4, t=t) == pytest.approx(1.0, rel=1e-9)

    def test_mlp_vanishes_with_count(self):
        params = _init_mlp_params(2, 4, np.random.default_rng(0))
        model = MlpModel(params)
        assert uncertainty(model, np.zeros(2), cell_count=1e12, t=100) < 1e-4

    def test_monotone_in_cell_count(self):
        params = _init_mlp_params(2, 4, np.random.default_rng(0))
        model = MlpModel(params)
        vals = [uncertainty(model, np.zeros(2), cell_count=c, t=50) for c in (0, 1, 2, 5, 20, 100)]
        assert all(v2 <= v1 for v1, v2 in zip(vals, vals[1:]))

    def test_width_shrinks_with_observations(self):
        model = RidgeModel(weights=np.zeros(2), lam=1.0)
        x = np.array([1.0, 0.5])
        before = uncertainty(model, x, 0, 1)
        model.add_observation(x, 0.3)
        after = uncertainty(model, x, 1, 2)
        assert after < before

    def test_round_validation(self):
        model = RidgeModel(weights=np.zeros(2))
        with pytest.raises(ValueError):
            uncertainty(model, np.zeros(2), 0, t=0)


class TestEvaluateModel:
    def test_summary_rows(self):
        model = RidgeModel(weights=np.array([1.0]))
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 1.0, 2.0, 4.0])
        groups = np.array([0, 0, 1, 1])
        rows = evaluate_model(model, X, y, groups, "continuous")
        assert rows[0] == (-1, "mse", pytest.approx(0.25))
        assert (0, "mse", pytest.approx(0.0)) in [(g, m, v) for g, m, v in rows]
