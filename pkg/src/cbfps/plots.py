"""Figure rendering for the report paths.

Figures are written next to the delimited output with deterministic bytes
(fixed dpi, no software metadata), so reruns of the same manifest reproduce
them exactly.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "f_statistic_boxplots",
    "effect_band_figure",
    "correlation_bars",
    "eigenfunction_figure",
]

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": None}}
_METHOD_ORDER = ("unweighted", "parametric", "nonparametric")
_METHOD_LABELS = {"unweighted": "Unweighted", "parametric": "Para", "nonparametric": "Np"}


def _save(fig, path):
    fig.savefig(Path(path), **_SAVE_KWARGS)
    plt.close(fig)


def f_statistic_boxplots(records, path, title=None) -> None:
    """Boxplots of per-run F statistics, grouped by FPC and method.

    `records` is an iterable of (fpc, method, f_statistic) tuples; infinite
    values are dropped from the display.
    """
    by_key = {}
    for fpc, method, value in records:
        if np.isfinite(value):
            by_key.setdefault((fpc, method), []).append(value)
    fpcs = sorted({k[0] for k in by_key})
    methods = [m for m in _METHOD_ORDER if any(k[1] == m for k in by_key)]

    fig, axes = plt.subplots(
        1, max(len(fpcs), 1), figsize=(2.6 * max(len(fpcs), 1), 3.4), sharey=False
    )
    if len(fpcs) <= 1:
        axes = [axes]
    for ax, fpc in zip(axes, fpcs):
        data = [by_key.get((fpc, m), [0.0]) for m in methods]
        ax.boxplot(data, tick_labels=[_METHOD_LABELS.get(m, m) for m in methods])
        ax.set_title(f"FPC{fpc}")
        ax.tick_params(axis="x", labelrotation=45)
    axes[0].set_ylabel("F statistic")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def effect_band_figure(grid_points, estimate, lower, upper, path, title=None) -> None:
    """Effect curve with pointwise confidence band."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if lower is not None and upper is not None and np.all(np.isfinite(lower)):
        ax.fill_between(grid_points, lower, upper, alpha=0.25, linewidth=0)
    ax.plot(grid_points, estimate)
    ax.axhline(0.0, color="gray", linewidth=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("effect")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def correlation_bars(records, path, title=None) -> None:
    """Grouped bars of absolute weighted correlations per (FPC, covariate)."""
    by_method = {}
    labels = []
    for fpc, covariate, method, value in records:
        label = f"FPC{fpc}-{covariate}"
        if label not in labels:
            labels.append(label)
        by_method.setdefault(method, {})[label] = value
    methods = [m for m in _METHOD_ORDER if m in by_method]
    x = np.arange(len(labels))
    width = 0.8 / max(len(methods), 1)

    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(labels)), 3.6))
    for j, method in enumerate(methods):
        values = [by_method[method].get(label, 0.0) for label in labels]
        ax.bar(x + j * width, values, width, label=_METHOD_LABELS.get(method, method))
    ax.set_xticks(x + width * (len(methods) - 1) / 2)
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_ylabel("|weighted correlation|")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def eigenfunction_figure(grid_points, eigenfunctions, pve, path) -> None:
    """Leading eigenfunctions annotated with their variance shares."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    shares = np.diff(np.concatenate([[0.0], pve]))
    for k, row in enumerate(eigenfunctions):
        ax.plot(grid_points, row, label=f"FPC{k + 1} ({100 * shares[k]:.1f}%)")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
