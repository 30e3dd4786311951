"""Figures for the report path: training curves, noise sweep, system comparison.

Everything renders through the Agg backend straight to files; nothing is
shown interactively.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "styleobf",  # stable ids so reruns write identical files
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else {"Date": None})
    plt.close(fig)
    return path


def training_curves(logs: Dict[str, Sequence[dict]], path) -> Path:
    """Train/dev loss per epoch, one colour per run; dashed lines are dev loss."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for i, (name, epochs) in enumerate(sorted(logs.items())):
            xs = [e["epoch"] for e in epochs]
            color = f"C{i % 10}"
            ax.plot(xs, [e["train_loss"] for e in epochs], color=color, label=name)
            ax.plot(xs, [e["dev_loss"] for e in epochs], color=color, ls="--")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss (nats/token)")
        if logs:
            ax.legend(frameon=False)
        return _save(fig, path)


def noise_sweep(rows: Sequence[dict], path, metrics=("bleu_src", "meteor_src")) -> Path:
    """Metric against noise level mu, plus delta accuracy on a twin axis when present."""
    rows = sorted(rows, key=lambda r: r["mu"])
    mus = [r["mu"] for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for m in metrics:
            ax.plot(mus, [r.get(m) for r in rows], marker="o", label=m)
        ax.set_xlabel(r"noise $\mu$")
        ax.set_ylabel("score (0-100)")
        if any(r.get("delta_acc") is not None for r in rows):
            tw = ax.twinx()
            tw.plot(mus, [100 * r["delta_acc"] for r in rows], color="k", ls=":", marker="s",
                    label="dACC")
            tw.set_ylabel("delta accuracy (points)")
            tw.legend(loc="upper right", frameon=False)
        ax.legend(loc="lower left", frameon=False)
        return _save(fig, path)


def system_bars(rows: Sequence[dict], path, metric: str = "delta_acc") -> Path:
    """Horizontal bars of one summary metric per system row."""
    names = [r["system"] for r in rows]
    vals = [r.get(metric) for r in rows]
    vals = [0.0 if v is None else (100 * v if metric == "delta_acc" else v) for v in vals]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 0.35 * len(rows) + 1.0))
        ax.barh(range(len(rows)), vals, color="0.5")
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(names)
        ax.invert_yaxis()
        ax.axvline(0, color="k", lw=0.8)
        ax.set_xlabel("delta accuracy (points)" if metric == "delta_acc" else metric)
        return _save(fig, path)
