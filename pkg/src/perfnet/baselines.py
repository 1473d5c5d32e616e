"""Comparison models: least squares, random forest and linear epsilon-SVR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


def _as_matrix(X, n_features=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if n_features in (None, 1) else X.reshape(1, -1)
    if n_features is not None and X.shape[1] != n_features and X.shape[0] > 0:
        raise ValueError(f"model was fit on {n_features} features, got {X.shape[1]}")
    return X


# --------------------------------------------------------------------------
# linear regression


@dataclass
class LinearModel:
    coefficients: np.ndarray
    intercept: float

    kind = "lr"

    @property
    def n_features(self):
        return len(self.coefficients)

    def predict(self, X):
        X = _as_matrix(X, self.n_features)
        if X.shape[0] == 0:
            return np.zeros(0)
        return X @ self.coefficients + self.intercept

    def to_dict(self):
        return {
            "model": self.kind,
            "format_version": FORMAT_VERSION,
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
        }


def fit_linear_regression(X, y, ridge=1e-8) -> LinearModel:
    """Ordinary least squares through the normal equations.

    Columns are centred and scaled before solving; a ``ridge`` term is added
    only when the Gram matrix is rank deficient (e.g. a constant feature).
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n, f = X.shape
    if n <= f:
        raise ValueError(f"need more rows than features, got {n} rows for {f} features")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - x_mean) / scale
    gram = Z.T @ Z
    rhs = Z.T @ (y - y_mean)
    if np.linalg.matrix_rank(gram) < f:
        gram = gram + ridge * np.eye(f)
    w = np.linalg.solve(gram, rhs) / scale
    return LinearModel(w, float(y_mean - x_mean @ w))


# --------------------------------------------------------------------------
# random forest


@dataclass
class Tree:
    """Flat binary tree; ``left[i] == -1`` marks a leaf holding ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.left[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.left[node[active]] >= 0]
        return self.value[node]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64),
        )


@dataclass
class ForestModel:
    trees: list
    n_features: int
    n_trees: int = 100
    max_depth: int = 16
    min_leaf: int = 2
    seed: int = 0

    kind = "rf"

    def predict(self, X):
        X = _as_matrix(X, self.n_features)
        if X.shape[0] == 0:
            return np.zeros(0)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_dict(self):
        return {
            "model": self.kind,
            "format_version": FORMAT_VERSION,
            "n_features": self.n_features,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }


def fit_random_forest(X, y, trees=100, max_depth=16, min_leaf=2, seed=0) -> ForestModel:
    """Bagged CART regression trees with ``ceil(F / 3)`` candidate features per split."""
    from sklearn.ensemble import RandomForestRegressor

    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 2 * min_leaf:
        raise ValueError(f"need at least {2 * min_leaf} rows, got {len(y)}")
    f = X.shape[1]
    forest = RandomForestRegressor(
        n_estimators=trees,
        max_depth=max_depth,
        min_samples_leaf=min_leaf,
        max_features=math.ceil(f / 3),
        bootstrap=True,
        random_state=seed,
        n_jobs=1,
    )
    forest.fit(X, y)
    flat = []
    for est in forest.estimators_:
        t = est.tree_
        flat.append(
            Tree(
                t.feature.astype(np.int64),
                t.threshold.astype(np.float64),
                t.children_left.astype(np.int64),
                t.children_right.astype(np.int64),
                t.value[:, 0, 0].astype(np.float64),
            )
        )
    return ForestModel(flat, f, trees, max_depth, min_leaf, seed)


# --------------------------------------------------------------------------
# support vector regression


@dataclass
class SvrModel:
    weights: np.ndarray
    intercept: float
    epsilon: float = 0.1
    C: float = 1.0
    trace: list = field(default_factory=list)

    kind = "svr"

    @property
    def n_features(self):
        return len(self.weights)

    def predict(self, X):
        X = _as_matrix(X, self.n_features)
        if X.shape[0] == 0:
            return np.zeros(0)
        return X @ self.weights + self.intercept

    def to_dict(self):
        return {
            "model": self.kind,
            "format_version": FORMAT_VERSION,
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "epsilon": self.epsilon,
            "C": self.C,
        }


def svr_objective(w, b, Z, t, epsilon, C):
    """Primal objective divided by the row count: ``0.5 |w|^2 / n + C * mean(slack)``."""
    slack = np.maximum(np.abs(t - Z @ w - b) - epsilon, 0.0)
    return 0.5 * float(w @ w) / len(t) + C * float(slack.mean())


def fit_svr(X, y, epsilon=0.1, C=1.0, epochs=50, seed=0, lr=0.1, batch_size=32) -> SvrModel:
    """Linear epsilon-insensitive SVR by mini-batch subgradient descent on the primal.

    Minimises ``0.5 |w|^2 + C * sum(max(0, |y - Xw - b| - epsilon))`` (scaled by
    ``1 / n``) with features and target standardised internally; ``epsilon``
    is in target units.  The step is ``lr / (max(C, 1) * (1 + epoch))``.
    Subgradient steps are not monotone, so the best iterate seen at the end
    of any epoch is kept; ``trace`` records its (standardised) objective
    after each epoch.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 1:
        raise ValueError("need at least one row")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    t = (y - y_mean) / y_scale
    eps = epsilon / y_scale
    n, f = Z.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(f)
    b = float(np.median(t))
    best = (svr_objective(w, b, Z, t, eps, C), w.copy(), b)
    trace = []
    for epoch in range(epochs):
        step = lr / (max(C, 1.0) * (1.0 + epoch))
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            r = t[idx] - Z[idx] @ w - b
            s = np.sign(r) * (np.abs(r) > eps)
            gw = w / n - C * (s @ Z[idx]) / len(idx)
            gb = -C * s.mean()
            w -= step * gw
            b -= step * gb
        obj = svr_objective(w, b, Z, t, eps, C)
        if obj < best[0]:
            best = (obj, w.copy(), b)
        trace.append(best[0])
    _, w, b = best
    weights = w * y_scale / scale
    return SvrModel(weights, float(y_mean + b * y_scale - mean @ weights), epsilon, C, trace)


# --------------------------------------------------------------------------


def predict(model, X):
    return model.predict(X)


def model_from_dict(d):
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    kind = d["model"]
    if kind == "lr":
        return LinearModel(np.array(d["coefficients"], dtype=np.float64), float(d["intercept"]))
    if kind == "svr":
        return SvrModel(
            np.array(d["weights"], dtype=np.float64), float(d["intercept"]), d["epsilon"], d["C"]
        )
    if kind == "rf":
        return ForestModel(
            [Tree.from_dict(t) for t in d["trees"]],
            d["n_features"],
            d["n_trees"],
            d["max_depth"],
            d["min_leaf"],
            d["seed"],
        )
    raise ValueError(f"unknown model kind {kind!r}")


BASELINES = {
    "lr": lambda X, y, seed: fit_linear_regression(X, y),
    "rf": lambda X, y, seed: fit_random_forest(X, y, seed=seed),
    "svr": lambda X, y, seed: fit_svr(X, y, seed=seed),
}
