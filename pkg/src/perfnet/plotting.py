"""Static SVG figures for residual diagnostics and training traces.

Figures are rendered headless and without timestamps or random ids, so the
same data always produces the same SVG bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "perfnet"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def plot_qq(theoretical, sample, path, title="residuals"):
    """Sample residual quantiles against standard-normal quantiles."""
    theoretical = np.asarray(theoretical, dtype=np.float64)
    sample = np.asarray(sample, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(theoretical, sample, s=6)
    if sample.size > 1 and theoretical.std() > 0:
        slope, intercept = np.polyfit(theoretical, sample, 1)
        ends = np.array([theoretical.min(), theoretical.max()])
        ax.plot(ends, slope * ends + intercept, color="black", linewidth=1)
    ax.set_xlabel("theoretical quantile")
    ax.set_ylabel("sample quantile")
    ax.set_title(title)
    return _save(fig, path)


def plot_residual_boxes(residuals_by_model: dict, path):
    """One box of |residual| per model, in the dict's order."""
    names = list(residuals_by_model)
    fig, ax = plt.subplots(figsize=(1.2 * max(len(names), 3), 4))
    ax.boxplot([np.asarray(residuals_by_model[n]) for n in names], showfliers=True)
    ax.set_xticks(range(1, len(names) + 1), names)
    ax.set_ylabel("|residual|")
    return _save(fig, path)


def plot_epoch_trace(columns: dict, path, title="training trace"):
    """R^2 and MAE by epoch for the training and validation splits."""
    epoch = columns["epoch"]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, metric in zip(axes, ("r2", "mae")):
        ax.plot(epoch, columns[f"train_{metric}"], label="train")
        ax.plot(epoch, columns[f"val_{metric}"], label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric)
        ax.legend()
    fig.suptitle(title)
    return _save(fig, path)
