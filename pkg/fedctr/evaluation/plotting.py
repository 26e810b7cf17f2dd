import warnings
from contextlib import contextmanager
from typing import Any, Dict, Optional, Sequence, Tuple

import matplotlib as mpl
import matplotlib.pyplot as plt
import numpy as np


@contextmanager
def non_gui_backend():
    """A contextmanager that temporarily uses a non-GUI backend for matplotlib."""
    with warnings.catch_warnings():
        ignore_messages = [
            "Matplotlib is currently using agg",
            "FigureCanvasAgg is non-interactive",
        ]
        for msg in ignore_messages:
            warnings.filterwarnings("ignore", category=UserWarning, message=msg)
        try:
            old_backend = mpl.get_backend()
            mpl.use("Agg")
            yield
        finally:
            mpl.use(old_backend)


def _column(rows: Sequence[Dict[str, Any]], key: str) -> np.ndarray:
    return np.array([np.nan if row.get(key) is None else row[key] for row in rows], dtype=float)


def _errorbar(ax: plt.Axes, x, rows, key: str, label: str, **kwargs) -> None:
    ax.errorbar(
        x,
        _column(rows, f"{key}_mean"),
        yerr=_column(rows, f"{key}_std"),
        label=label,
        capsize=3,
        marker="o",
        **kwargs,
    )


def plot_platform_ablation(
    rows: Sequence[Dict[str, Any]],
    grid: bool = True,
    legend: bool = True,
    **figure_kwargs,
) -> Tuple[plt.Figure, plt.Axes]:
    """Plots test AUC and AP against the number of platforms.

    Args:
        rows: The table of :func:`fedctr.evaluation.run_ablation_platforms`.
        grid: Whether to add grid lines to the plot.
        legend: Whether to include a legend.

    Returns:
        matplotlib figure and axes
    """
    fig, ax = plt.subplots(**figure_kwargs)
    x = np.arange(len(rows))
    _errorbar(ax, x, rows, "auc", "AUC")
    _errorbar(ax, x, rows, "ap", "AP")
    ax.set_xticks(x)
    ax.set_xticklabels([row.get("names", row["platforms"]) for row in rows])
    ax.set_xlabel("Behavior platforms")
    ax.set_ylabel("Test metric")
    ax.grid(grid)
    if legend:
        ax.legend(loc=0)
    return fig, ax


def plot_noise_tradeoff(
    rows: Sequence[Dict[str, Any]],
    lambda_dp: Optional[float] = None,
    grid: bool = True,
    legend: bool = True,
    **figure_kwargs,
) -> Tuple[plt.Figure, Sequence[plt.Axes]]:
    """Plots CTR AUC and attack AUC against the local noise scale.

    Args:
        rows: The table of :func:`fedctr.evaluation.run_ablation_noise`.
        lambda_dp: Only rows with this aggregated noise scale are plotted.
            Defaults to the smallest scale in ``rows``.
        grid: Whether to add grid lines to the plot.
        legend: Whether to include a legend.

    Returns:
        matplotlib figure and ``(ctr_ax, attack_ax)``
    """
    if lambda_dp is None:
        lambda_dp = min(row["lambda_dp"] for row in rows)
    rows = sorted(
        (row for row in rows if row["lambda_dp"] == lambda_dp),
        key=lambda row: row["lambda_ldp"],
    )
    figure_kwargs.setdefault("figsize", (9, 3.5))
    fig, (ctr_ax, attack_ax) = plt.subplots(1, 2, **figure_kwargs)
    x = np.arange(len(rows))
    labels = [f"{row['lambda_ldp']:g}" for row in rows]
    _errorbar(ctr_ax, x, rows, "auc", "CTR AUC")
    _errorbar(ctr_ax, x, rows, "ap", "CTR AP")
    for key, label in (("attack_local", "local"), ("attack_aggregated", "aggregated")):
        if f"{key}_mean" in rows[0]:
            _errorbar(attack_ax, x, rows, key, label)
    for ax in (ctr_ax, attack_ax):
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_xlabel("$\\lambda_\\mathrm{LDP}$")
        ax.grid(grid)
        if legend:
            ax.legend(loc=0)
    ctr_ax.set_ylabel("Test metric")
    attack_ax.set_ylabel("Attack AUC")
    fig.suptitle(f"$\\lambda_\\mathrm{{DP}} = {lambda_dp:g}$")
    return fig, (ctr_ax, attack_ax)


def plot_variant_comparison(
    rows: Sequence[Dict[str, Any]],
    metric: str = "auc",
    grid: bool = True,
    **figure_kwargs,
) -> Tuple[plt.Figure, plt.Axes]:
    """Grouped bars of a test metric for every predictor and aggregator.

    Args:
        rows: The table of :func:`fedctr.evaluation.run_ablation_variants`.
        metric: ``"auc"`` or ``"ap"``.
        grid: Whether to add grid lines to the plot.

    Returns:
        matplotlib figure and axes
    """
    predictors = list(dict.fromkeys(row["predictor"] for row in rows))
    aggregators = list(dict.fromkeys(row["aggregator"] for row in rows))
    width = 0.8 / len(aggregators)
    fig, ax = plt.subplots(**figure_kwargs)
    x = np.arange(len(predictors))
    for j, aggregator in enumerate(aggregators):
        values = {row["predictor"]: row for row in rows if row["aggregator"] == aggregator}
        means = [values[p][f"{metric}_mean"] if p in values else np.nan for p in predictors]
        stds = [values[p][f"{metric}_std"] if p in values else np.nan for p in predictors]
        offset = (j - (len(aggregators) - 1) / 2) * width
        ax.bar(x + offset, means, width, yerr=stds, label=aggregator, capsize=2)
    ax.set_xticks(x)
    ax.set_xticklabels(predictors)
    ax.set_xlabel("Predictor")
    ax.set_ylabel(f"Test {metric.upper()}")
    ax.grid(grid, axis="y")
    ax.legend(title="Aggregator", loc=0)
    return fig, ax
