"""Figure rendering for training and evaluation outputs. Figures are written
next to the line-delimited metrics/report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import MetricReport
from .training import read_metrics

LOSS_KEYS = ("gan_g", "gan_d", "nce_x", "nce_idt", "total")


def render_training_curves(metrics_path, out_path) -> Path:
    """Loss curves + learning-rate schedule from a metrics.jsonl file."""
    rows = read_metrics(metrics_path)
    out_path = Path(out_path)
    fig, (ax_loss, ax_lr) = plt.subplots(
        2, 1, figsize=(8, 6), sharex=True, height_ratios=[3, 1]
    )
    if rows:
        steps = [r["step"] for r in rows]
        for key in LOSS_KEYS:
            ax_loss.plot(steps, [r[key] for r in rows], label=key, lw=1)
        ax_lr.plot(steps, [r["lr"] for r in rows], color="k", lw=1)
    ax_loss.set_ylabel("loss")
    ax_loss.legend(loc="upper right", fontsize=8)
    ax_lr.set_ylabel("lr")
    ax_lr.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_metric_report(report: MetricReport, out_path) -> Path:
    """Bar chart of the scored metrics, with the per-domain breakdown when
    present."""
    out_path = Path(out_path)
    n_axes = 2 if report.per_domain else 1
    fig, axes = plt.subplots(1, n_axes, figsize=(4 * n_axes, 3.5))
    axes = [axes] if n_axes == 1 else list(axes)

    names, values = [], []
    for name, val in (("avc", report.avc), ("fid", report.fid), ("clip", report.clip_score)):
        if val is not None:
            names.append(name)
            values.append(val)
    axes[0].bar(names, values, color="tab:blue")
    axes[0].set_title(f"metrics (n={report.n_samples})")
    for name, val in zip(names, values):
        axes[0].annotate(f"{val:.3f}", (name, val), ha="center", va="bottom", fontsize=8)

    if report.per_domain:
        tags = sorted(report.per_domain)
        axes[1].bar(tags, [report.per_domain[t] for t in tags], color="tab:green")
        axes[1].set_title("per-domain avc")
        axes[1].tick_params(axis="x", rotation=30)

    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
