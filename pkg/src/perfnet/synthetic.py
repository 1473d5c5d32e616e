"""Seeded synthetic regression data for desk-scale checks."""

from __future__ import annotations

import numpy as np

from .data import CleanDataset, ColumnInfo


def make_synthetic(n_rows=5000, n_features=24, seed=0, linear_share=0.6, n_interactions=3,
                   decay=0.7, noise=0.01, offset=10.0) -> CleanDataset:
    """Target = linear part + pairwise products + Gaussian noise.

    Features are standard normal.  Linear coefficients decay geometrically
    (``decay ** rank``, random signs and column positions) and are scaled so
    the linear part explains ``linear_share`` of the noiseless variance.  The
    remainder comes from products of consecutive strongest features; products
    of independent standard normals are uncorrelated with every feature, so a
    linear model cannot recover that share.  ``noise`` is the noise standard
    deviation relative to the signal's.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    coef = decay ** np.arange(n_features) * rng.choice([-1.0, 1.0], n_features)
    rng.shuffle(coef)
    coef *= np.sqrt(linear_share / np.sum(coef**2))
    strongest = np.argsort(-np.abs(coef), kind="stable")
    signal = X @ coef
    weight = np.sqrt((1.0 - linear_share) / n_interactions)
    for k in range(n_interactions):
        signal += weight * X[:, strongest[k]] * X[:, strongest[k + 1]]
    y = offset + signal + noise * signal.std() * rng.standard_normal(n_rows)
    cols = [ColumnInfo(f"x{k:02d}", "numeric") for k in range(n_features)]
    return CleanDataset(X, y, cols)


def make_linear(n_rows=200, n_features=3, seed=0, noise=0.0) -> CleanDataset:
    """Noiseless (by default) linear target for sanity checks."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-5, 5, (n_rows, n_features))
    coef = np.arange(1, n_features + 1, dtype=np.float64)
    y = X @ coef + 3.0 + noise * rng.standard_normal(n_rows)
    cols = [ColumnInfo(f"x{k:02d}", "numeric") for k in range(n_features)]
    return CleanDataset(X, y, cols)
