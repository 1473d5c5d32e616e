"""Regression metrics and residual diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


@dataclass(frozen=True)
class Metrics:
    r2: float
    mae: float
    mse: float

    @property
    def r2_defined(self) -> bool:
        return not np.isnan(self.r2)

    def as_tuple(self):
        return (self.r2, self.mae, self.mse)


def compute_metrics(pred, truth) -> Metrics:
    """R^2, MAE and MSE of ``pred`` against ``truth``.

    R^2 is ``nan`` when ``truth`` is constant (its total sum of squares is 0).
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"pred has {pred.size} values, truth has {truth.size}")
    if pred.size == 0:
        raise ValueError("cannot score an empty prediction vector")
    resid = truth - pred
    sse = float(np.sum(resid**2))
    sst = float(np.sum((truth - truth.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else float("nan")
    return Metrics(r2=r2, mae=float(np.mean(np.abs(resid))), mse=sse / pred.size)


def mean_metrics(items) -> Metrics:
    items = list(items)
    if not items:
        return Metrics(float("nan"), float("nan"), float("nan"))
    arr = np.array([m.as_tuple() for m in items], dtype=np.float64)
    return Metrics(*(float(v) for v in arr.mean(axis=0)))


def normal_quantiles(n: int) -> np.ndarray:
    """Standard-normal quantiles at the plotting positions ``(i - 0.5) / n``."""
    return ndtri((np.arange(1, n + 1) - 0.5) / n)


def qq_pairs(residuals):
    """``(theoretical, sample)`` quantile columns for a normal Q-Q plot."""
    sample = np.sort(np.asarray(residuals, dtype=np.float64).ravel())
    return normal_quantiles(sample.size), sample
