"""Matplotlib figures rendered next to the delimited outputs.

Everything uses the Agg backend so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import TaylorReport, _sigmoid, taylor_eval  # noqa: E402
from .training import Metrics  # noqa: E402


def loss_figure(metrics: Metrics, path) -> Path:
    """Train/validation loss per epoch, one color per seed."""
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(9, 3.4))
    for res in metrics.per_seed:
        if not res.history:
            continue
        epochs = [r.epoch for r in res.history]
        ax_loss.plot(epochs, [r.train_loss for r in res.history],
                     lw=1.0, alpha=0.8, label=f"seed {res.seed} train")
        ax_loss.plot(epochs, [r.val_loss for r in res.history],
                     lw=1.0, ls="--", alpha=0.8, label=f"seed {res.seed} val")
        ax_metric.plot(epochs, [r.val_metric for r in res.history],
                       lw=1.0, alpha=0.8, label=f"seed {res.seed}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylabel(f"val {metrics.metric_name}")
    if len(metrics.per_seed) <= 4:
        ax_loss.legend(fontsize=7)
    fig.suptitle(f"{metrics.task}: mean {metrics.metric_name} "
                 f"{'n/a' if metrics.mean is None else f'{metrics.mean:.4f}'}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def taylor_figure(report: TaylorReport, path) -> Path:
    """Sigmoid vs. its truncated expansion, and the error against the bound."""
    t = np.linspace(-3 * report.t_max, 3 * report.t_max, 400)
    approx = taylor_eval(report.coefficients, t)
    exact = _sigmoid(t)
    fig, (ax_fn, ax_err) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax_fn.plot(t, exact, label="sigmoid")
    ax_fn.plot(t, approx, ls="--", label=f"degree-{report.degree} expansion")
    ax_fn.axvspan(-report.t_max, report.t_max, color="0.9", zorder=0)
    ax_fn.set_xlabel("t")
    ax_fn.legend(fontsize=8)
    ax_err.semilogy(t, np.abs(exact - approx) + 1e-18, label="|error|")
    ax_err.axhline(report.remainder, color="r", ls=":",
                   label="bound on shaded range")
    ax_err.axvspan(-report.t_max, report.t_max, color="0.9", zorder=0)
    ax_err.set_xlabel("t")
    ax_err.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def grid_figure(rows: list[dict], path) -> Path:
    """Validation metric for every loss-weight combination, sorted."""
    vals = sorted((r["val_metric"] for r in rows if r["val_metric"] is not None),
                  reverse=True)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(range(1, len(vals) + 1), vals, marker=".", lw=0.8)
    ax.set_xlabel("combination rank")
    ax.set_ylabel("val metric")
    ax.set_title("loss-weight grid")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
