"""Outcome models: the shared predictor from context vectors to expected
outcomes, in ridge, logistic, and small-MLP variants, plus the uncertainty
estimate used for UCB scoring.

Linear kinds carry a regularized Gram matrix A = lam*I + sum(w x x^T) so the
LinUCB-style confidence width sqrt(x^T A^-1 x) shrinks as (possibly
fractionally weighted) observations accumulate. The MLP falls back to a
count-based bonus sqrt(2 ln t / n) on the (group, resource) cell.
"""

from __future__ import annotations

import math

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_matrix(rows):
    if isinstance(rows, tuple) and len(rows) == 2:
        X, y = rows
        return np.asarray(X, dtype=float), np.asarray(y, dtype=float)
    X = np.asarray([np.asarray(x, dtype=float) for x, _ in rows])
    y = np.asarray([float(v) for _, v in rows])
    return X, y


class _GramMixin:
    """Shared design-Gram bookkeeping for the linear kinds."""

    def _init_gram(self, dim, lam):
        self.lam = float(lam)
        self._gram = self.lam * np.eye(dim)
        self._gram_inv = None

    def _gram_add(self, x, weight):
        self._gram += weight * np.outer(x, x)
        self._gram_inv = None

    def _inv(self):
        if self._gram_inv is None:
            self._gram_inv = np.linalg.inv(self._gram)
        return self._gram_inv

    def confidence_width(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(math.sqrt(max(0.0, x @ self._inv() @ x)))

    def confidence_width_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        q = np.einsum("ij,jk,ik->i", X, self._inv(), X)
        return np.sqrt(np.clip(q, 0.0, None))


class RidgeModel(_GramMixin):
    """L2-regularized linear regression with a centered-fit intercept.

    Coefficients solve the ridge system on mean-centered features and
    targets, so exact linear data is recovered exactly; the confidence-width
    Gram stays on raw features (it counts observation geometry, not fit
    quality) and is the identity for a freshly built lam=1 model.
    """

    kind = "ridge"
    output_range = None  # unbounded

    def __init__(self, weights, intercept=0.0, lam=1.0, gram=None, moments=None):
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)
        dim = self.weights.size
        self._init_gram(dim, lam)
        if gram is not None:
            self._gram = np.asarray(gram, dtype=float).copy()
        # weighted raw moments (count, sum x, sum y, sum x x^T, sum y x)
        if moments is None:
            self._sw = 0.0
            self._sx = np.zeros(dim)
            self._sy = 0.0
            self._sxx = np.zeros((dim, dim))
            self._sxy = np.zeros(dim)
        else:
            self._sw, self._sx, self._sy, self._sxx, self._sxy = moments

    @property
    def dim(self):
        return self.weights.size

    def _check_dim(self, x):
        if x.shape[-1] != self.dim:
            raise ValueError(f"context has dimension {x.shape[-1]}, model expects {self.dim}")

    def predict(self, x, resource=None) -> float:
        x = np.asarray(x, dtype=float)
        self._check_dim(x)
        return float(x @ self.weights + self.intercept)

    def predict_batch(self, X, resource=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        self._check_dim(X)
        return X @ self.weights + self.intercept

    def add_observation(self, x, y, weight=1.0):
        x = np.asarray(x, dtype=float)
        y = float(y)
        self._gram_add(x, weight)
        self._sw += weight
        self._sx += weight * x
        self._sy += weight * y
        self._sxx += weight * np.outer(x, x)
        self._sxy += weight * y * x

    def refit(self):
        if self._sw <= 0.0:
            return
        x_bar = self._sx / self._sw
        y_bar = self._sy / self._sw
        centered_gram = self._sxx - self._sw * np.outer(x_bar, x_bar)
        centered_target = self._sxy - self._sy * x_bar
        self.weights = np.linalg.solve(self.lam * np.eye(self.dim) + centered_gram,
                                       centered_target)
        self.intercept = y_bar - float(self.weights @ x_bar)


class LogisticModel(_GramMixin):
    """L2-regularized logistic regression (full-batch gradient descent) with
    an unpenalized intercept. Predictions are class-1 probabilities."""

    kind = "logistic"
    output_range = (0.0, 1.0)

    def __init__(self, weights, intercept=0.0, lam=1e-3, gram=None):
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)
        self._init_gram(self.weights.size, max(lam, 1e-12))
        if gram is not None:
            self._gram = np.asarray(gram, dtype=float).copy()
        self._rows_X = []
        self._rows_y = []
        self._rows_w = []

    @property
    def dim(self):
        return self.weights.size

    def _check_dim(self, x):
        if x.shape[-1] != self.dim:
            raise ValueError(f"context has dimension {x.shape[-1]}, model expects {self.dim}")

    def predict(self, x, resource=None) -> float:
        x = np.asarray(x, dtype=float)
        self._check_dim(x)
        return float(_sigmoid(np.atleast_1d(x @ self.weights + self.intercept))[0])

    def predict_batch(self, X, resource=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        self._check_dim(X)
        return _sigmoid(X @ self.weights + self.intercept)

    def add_observation(self, x, y, weight=1.0):
        x = np.asarray(x, dtype=float)
        self._gram_add(x, weight)
        self._rows_X.append(x)
        self._rows_y.append(float(y))
        self._rows_w.append(float(weight))

    def refit(self, max_iter=2000):
        if not self._rows_X:
            return
        X = np.asarray(self._rows_X)
        y = np.asarray(self._rows_y)
        w = np.asarray(self._rows_w)
        full = _logistic_gd(X, y, self.lam,
                            w0=np.append(self.weights, self.intercept),
                            sample_w=w, max_iter=max_iter)
        self.weights, self.intercept = full[:-1], float(full[-1])


def logistic_loss_grad(w, X, y, lam, sample_w=None):
    """Mean log-loss plus (lam/2n)||w||^2 and its analytic gradient."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    sw = np.ones(n) if sample_w is None else np.asarray(sample_w, dtype=float)
    total = sw.sum()
    z = X @ w
    # stable log(1+exp(z)) and log-loss
    log1pez = np.logaddexp(0.0, z)
    loss = float((sw * (log1pez - y * z)).sum() / total + 0.5 * lam * (w @ w) / total)
    p = _sigmoid(z)
    grad = (X.T @ (sw * (p - y))) / total + lam * w / total
    return loss, grad


def _logistic_gd(X, y, lam, w0=None, sample_w=None, lr=1.0, max_iter=5000, tol=1e-10):
    """Gradient descent on the intercept-augmented design (ones column last)."""
    X_aug = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    w = np.zeros(X_aug.shape[1]) if w0 is None else np.asarray(w0, dtype=float).copy()
    prev = np.inf
    for _ in range(max_iter):
        loss, grad = logistic_loss_grad(w, X_aug, y, lam, sample_w)
        w -= lr * grad
        if abs(prev - loss) < tol:
            break
        prev = loss
    return w


class MlpModel:
    """One hidden layer of tanh units trained by full-batch gradient descent.

    output="linear" for regression, "sigmoid" for class probabilities.
    """

    kind = "mlp"

    def __init__(self, params, output="linear"):
        self.W1, self.b1, self.w2, self.b2 = params
        if output not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output mode {output!r}")
        self.output = output
        self.output_range = (0.0, 1.0) if output == "sigmoid" else None
        self._rows_X = []
        self._rows_y = []
        self._rows_w = []

    @property
    def dim(self):
        return self.W1.shape[1]

    def _check_dim(self, X):
        if X.shape[-1] != self.dim:
            raise ValueError(f"context has dimension {X.shape[-1]}, model expects {self.dim}")

    def predict_batch(self, X, resource=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        self._check_dim(X)
        h = np.tanh(X @ self.W1.T + self.b1)
        z = h @ self.w2 + self.b2
        return _sigmoid(z) if self.output == "sigmoid" else z

    def predict(self, x, resource=None) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def add_observation(self, x, y, weight=1.0):
        self._rows_X.append(np.asarray(x, dtype=float))
        self._rows_y.append(float(y))
        self._rows_w.append(float(weight))

    def refit(self, epochs=200, lr=None):
        if not self._rows_X:
            return
        X = np.asarray(self._rows_X)
        y = np.asarray(self._rows_y)
        sw = np.asarray(self._rows_w)
        params = (self.W1, self.b1, self.w2, self.b2)
        params = _mlp_gd(params, X, y, self.output, sample_w=sw, epochs=epochs,
                         lr=MLP_LEARNING_RATE if lr is None else lr)
        self.W1, self.b1, self.w2, self.b2 = params


def mlp_loss_grad(params, X, y, output="linear", sample_w=None):
    """Weighted mean loss (squared error / log-loss) and analytic gradients."""
    W1, b1, w2, b2 = params
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    sw = np.ones(n) if sample_w is None else np.asarray(sample_w, dtype=float)
    total = sw.sum()
    a = X @ W1.T + b1
    h = np.tanh(a)
    z = h @ w2 + b2
    if output == "linear":
        resid = z - y
        loss = float((sw * resid * resid).sum() / (2.0 * total))
        dz = sw * resid / total
    else:
        log1pez = np.logaddexp(0.0, z)
        loss = float((sw * (log1pez - y * z)).sum() / total)
        dz = sw * (_sigmoid(z) - y) / total
    gw2 = h.T @ dz
    gb2 = float(dz.sum())
    dh = np.outer(dz, w2) * (1.0 - h * h)
    gW1 = dh.T @ X
    gb1 = dh.sum(axis=0)
    return loss, (gW1, gb1, gw2, gb2)


MLP_HIDDEN = 32
MLP_LEARNING_RATE = 1e-1
MLP_EPOCHS = 2000
MLP_LOSS_DELTA = 1e-7


def _mlp_gd(params, X, y, output, sample_w=None, epochs=MLP_EPOCHS, lr=MLP_LEARNING_RATE):
    W1, b1, w2 = (np.array(p, dtype=float) for p in params[:3])
    b2 = float(params[3])
    prev = np.inf
    for _ in range(epochs):
        loss, (gW1, gb1, gw2, gb2) = mlp_loss_grad((W1, b1, w2, b2), X, y, output, sample_w)
        W1 -= lr * gW1
        b1 -= lr * gb1
        w2 -= lr * gw2
        b2 -= lr * gb2
        if abs(prev - loss) < MLP_LOSS_DELTA:
            break
        prev = loss
    return W1, b1, w2, b2


def _init_mlp_params(n_features, hidden, rng):
    W1 = rng.normal(0.0, 1.0 / math.sqrt(n_features), size=(hidden, n_features))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=hidden)
    b2 = 0.0
    return W1, b1, w2, b2


def fit_outcome_model(
    rows,
    kind: str,
    *,
    lam: float = 1.0,
    outcome_kind: str = "continuous",
    seed: int = 0,
    hidden: int = MLP_HIDDEN,
):
    """Fit a predictor of the requested kind on (context, outcome) rows.

    rows may be a list of (vector, float) pairs or an (X, y) tuple. Linear
    kinds require at least M+1 rows. Ridge uses the closed-form solution;
    logistic runs gradient descent to convergence; the MLP trains one
    hidden tanh layer to a loss plateau.
    """
    X, y = _as_matrix(rows)
    if X.size == 0:
        raise ValueError("empty training set")
    n, m = X.shape
    if kind in ("ridge", "logistic") and n < m + 1:
        raise ValueError(f"linear kinds need at least {m + 1} rows, got {n}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("training rows must be finite")

    if kind == "ridge":
        if lam <= 0.0 and np.linalg.matrix_rank(X - X.mean(axis=0)) < m:
            raise ValueError("degenerate design matrix")
        model = RidgeModel(np.zeros(m), lam=lam)
        for x_row, y_row in zip(X, y):
            model.add_observation(x_row, y_row)
        model.refit()
        return model
    if kind == "logistic":
        full = _logistic_gd(X, y, lam)
        gram = lam * np.eye(m) + X.T @ X
        return LogisticModel(full[:-1], intercept=float(full[-1]), lam=lam, gram=gram)
    if kind == "mlp":
        rng = np.random.default_rng(seed)
        output = "sigmoid" if outcome_kind == "binary" else "linear"
        params = _init_mlp_params(m, hidden, rng)
        params = _mlp_gd(params, X, y, output)
        model = MlpModel(params, output=output)
        # keep the training rows so online refits warm-start from full data
        model._rows_X = list(X)
        model._rows_y = list(y)
        model._rows_w = [1.0] * n
        return model
    raise ValueError(f"unknown model kind {kind!r}")


def uncertainty(model, x, cell_count, t: int) -> float:
    """UCB uncertainty for one (context, cell) query.

    Linear kinds use the Gram confidence width; the MLP uses the
    count-based bonus sqrt(2 ln t / max(1, cell_count)).
    """
    if t < 1:
        raise ValueError(f"round must be >= 1, got {t}")
    if model.kind in ("ridge", "logistic"):
        return model.confidence_width(x)
    return math.sqrt(2.0 * math.log(t) / max(1.0, float(cell_count)))


def evaluate_model(model, X, y, groups, outcome_kind) -> list[tuple]:
    """(group, metric, value) summary rows; group -1 denotes overall."""
    preds = model.predict_batch(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    if outcome_kind == "binary":
        metric = "accuracy"
        def score(mask):
            return float(np.mean((preds[mask] >= 0.5) == (y[mask] >= 0.5)))
    else:
        metric = "mse"
        def score(mask):
            return float(np.mean((preds[mask] - y[mask]) ** 2))
    rows = [(-1, metric, score(np.ones(y.size, dtype=bool)))]
    for g in sorted(set(groups.tolist())):
        mask = groups == g
        if mask.any():
            rows.append((int(g), metric, score(mask)))
    return rows
