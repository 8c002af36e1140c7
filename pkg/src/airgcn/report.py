"""Machine-readable run reports: JSON document, CSV histories, figures.

A report directory holds ``report.json`` (config echo, per-seed metrics,
mean/std, wall clock, RNG algorithm), one ``history_seed<N>.csv`` per seed
with ``epoch,train_loss,val_loss,val_metric`` rows, and a rendered loss
figure next to them.
"""

from __future__ import annotations

import json
from pathlib import Path

from .training import Metrics, SeedResult


def seed_result_dict(res: SeedResult) -> dict:
    out = {
        "seed": res.seed,
        "test_metric": res.test_metric,
        "val_metric": res.val_metric,
        "best_val_loss": res.best_val_loss,
        "best_epoch": res.best_epoch,
        "epochs_run": res.epochs_run,
    }
    if res.error is not None:
        out["error"] = res.error
    return out


def report_dict(metrics: Metrics, config_echo: dict) -> dict:
    return {
        "config": config_echo,
        "task": metrics.task,
        "metric": metrics.metric_name,
        "seeds": [seed_result_dict(r) for r in metrics.per_seed],
        "mean": metrics.mean,
        "std": metrics.std,
        "wall_clock_sec": metrics.wall_clock_sec,
        "rng": metrics.rng_algorithm,
    }


def history_csv_lines(res: SeedResult) -> str:
    lines = ["epoch,train_loss,val_loss,val_metric"]
    for rec in res.history:
        lines.append(f"{rec.epoch},{rec.train_loss!r},{rec.val_loss!r},{rec.val_metric!r}")
    return "\n".join(lines) + "\n"


def write_report(metrics: Metrics, config_echo: dict, out_dir,
                 figures: bool = True) -> Path:
    """Write report.json plus per-seed CSV histories and a loss figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report_dict(metrics, config_echo)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n",
                                     encoding="utf-8")
    for res in metrics.per_seed:
        if res.history:
            (out / f"history_seed{res.seed}.csv").write_text(
                history_csv_lines(res), encoding="utf-8")
    if figures:
        from .plots import loss_figure
        loss_figure(metrics, out / "loss_curves.png")
    return out / "report.json"
