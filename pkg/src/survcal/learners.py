"""Regression and classification primitives used as base predictors and auditors."""

import math
from dataclasses import dataclass, field

import numpy as np

from survcal._backend import kernels


def _intercept_columns(X):
    return np.all(X == 1.0, axis=0)


@dataclass(frozen=True)
class ConstantModel:
    value: float

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], float(self.value))


@dataclass(frozen=True)
class LinearModel:
    """``predict(X) = X @ weights``; intercepts come from an all-ones column."""

    weights: np.ndarray

    def predict(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights


def fit_ols(X, y, ridge_fallback=True):
    """Least squares via a pivoted SVD solve.

    Rank-deficient designs fall through to ridge with ``lambda = 1e-8`` unless
    ``ridge_fallback`` is False, in which case a ``LinAlgError`` is raised.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if X.shape[0] >= X.shape[1] and np.linalg.matrix_rank(X) == X.shape[1]:
        w, *_ = np.linalg.lstsq(X, y, rcond=None)
        return LinearModel(w)
    if not ridge_fallback:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    return fit_ridge(X, y, 1e-8)


def fit_ridge(X, y, lam=1.0):
    """Ridge regression; all-ones columns are left unpenalised."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if not lam > 0:
        raise ValueError("ridge lambda must be positive")
    penalty = np.where(_intercept_columns(X), 0.0, lam)
    A = X.T @ X + np.diag(penalty)
    b = X.T @ y
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(A, b, rcond=None)[0]
    return LinearModel(w)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    separated: bool = False
    n_iter: int = 0

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))


def fit_logistic(X, labels, max_iter=100, tol=1e-8):
    """Logistic regression by Newton/IRLS.

    Stops once the max-norm of the log-likelihood gradient ``X'(p - y)`` falls
    below ``tol``. Separable data (fitted scores split the classes perfectly,
    or the weights diverge) is refit with an L2 penalty of 1e-6 and the result
    flagged ``separated``.
    """
    X = np.asarray(X, dtype=np.float64)
    yb = np.asarray(labels, dtype=bool)
    if yb.all() or not yb.any():
        raise ValueError("degenerate labels")
    y = yb.astype(np.float64)
    w, it, ok = _irls(X, y, 0.0, max_iter, tol)
    z = X @ w
    # scores that split the classes perfectly mean the MLE does not exist
    if ok and not z[yb].min() > z[~yb].max():
        return LogisticModel(w, False, it)
    w, it, _ = _irls(X, y, 1e-6, max_iter, tol)
    return LogisticModel(w, True, it)


def _nll(X, y, w, lam):
    z = X @ w
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * w @ w)


def _irls(X, y, lam, max_iter, tol):
    d = X.shape[1]
    w = np.zeros(d)
    loss = _nll(X, y, w, lam)
    for it in range(1, max_iter + 1):
        p = _sigmoid(X @ w)
        grad = X.T @ (p - y) + lam * w
        if np.max(np.abs(grad)) < tol:
            return w, it - 1, True
        s = p * (1.0 - p)
        H = (X * s[:, None]).T @ X + (lam + 1e-12) * np.eye(d)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            w_new = w - t * step
            new_loss = _nll(X, y, w_new, lam)
            if new_loss <= loss + 1e-12 or t < 1e-10:
                break
            t *= 0.5
        w, loss = w_new, new_loss
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > 50:
            return w, it, lam > 0
    p = _sigmoid(X @ w)
    grad = X.T @ (p - y) + lam * w
    return w, max_iter, lam > 0 or np.max(np.abs(grad)) < tol


@dataclass
class RegressionTree:
    """Binary regression tree stored as flat node arrays.

    Internal nodes route ``x[feature] <= threshold`` to ``left``; leaves have
    ``feature == -1`` and predict ``value``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    max_depth: int
    min_leaf: int

    def apply(self, X):
        """Leaf index for every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            a = rows[active]
            go_left = X[a, f[active]] <= self.threshold[node[a]]
            node[a] = np.where(go_left, self.left[node[a]], self.right[node[a]])

    def predict(self, X):
        return self.value[self.apply(X)]

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def _grow(X, y, max_depth, min_leaf, choose_features=None):
    d = X.shape[1]
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[rows])))
        count.append(rows.shape[0])
        return len(feature) - 1

    root = new_node(np.arange(y.shape[0]))
    stack = [(root, np.arange(y.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or rows.shape[0] < 2 * min_leaf:
            continue
        yr = y[rows]
        if yr.max() == yr.min():
            continue
        feats = np.arange(d) if choose_features is None else choose_features()
        f, thr, gain = kernels.best_split(X[rows], yr, feats, min_leaf)
        if f < 0 or not gain > 1e-12 * max(1.0, float(yr @ yr)):
            continue
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return RegressionTree(
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        np.asarray(value, dtype=np.float64),
        np.asarray(count, dtype=np.intp),
        max_depth,
        min_leaf,
    )


def fit_tree(X, y, max_depth=2, min_leaf=10):
    """Greedy CART regression tree with an exhaustive midpoint threshold scan."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] < min_leaf:
        raise ValueError("fewer rows than min_leaf")
    return _grow(X, y, max_depth, max(1, min_leaf))


@dataclass
class Forest:
    trees: list = field(default_factory=list)
    seed: int = 0

    def predict(self, X):
        out = np.zeros(np.asarray(X).shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)


def fit_forest(X, y, n_trees=100, max_depth=6, mtry=None, seed=0, min_leaf=5, bootstrap=True):
    """Bagged regression trees with ``mtry`` features sampled per split.

    Tree ``k`` draws from its own stream seeded by ``(seed, k)`` so results do
    not depend on growing order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    n, d = X.shape
    mtry = max(1, math.ceil(d / 3)) if mtry is None else min(int(mtry), d)
    trees = []
    for k in range(n_trees):
        rng = np.random.default_rng([seed, k])
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)

        def choose(rng=rng):
            return np.sort(rng.choice(d, size=mtry, replace=False))

        trees.append(_grow(X[rows], y[rows], max_depth, max(1, min_leaf), choose))
    return Forest(trees, seed)


@dataclass(frozen=True)
class AuditorSpec:
    """Auditing regressor: ``kind`` is ``"ridge"`` or ``"tree"``."""

    kind: str = "ridge"
    lam: float = 1.0
    depth: int = 2
    min_leaf: int = 10

    def __post_init__(self):
        if self.kind not in ("ridge", "tree"):
            raise ValueError(f"unknown auditor kind {self.kind!r}")

    def fit(self, X, y):
        if self.kind == "ridge":
            return fit_ridge(X, y, self.lam)
        return fit_tree(X, y, self.depth, self.min_leaf)
