"""Figure rendering for run artifacts.

Every CLI command that writes delimited output can also render the
matching figure next to it: loss/accuracy curves per run or per fold,
grouped metric bars for variant comparisons, and attention heatmaps.
All rendering targets files (Agg backend); nothing opens a display.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import METRIC_KEYS


def _curve_axes(ax, logs, title: str):
    epochs = [r.epoch for r in logs]
    ax.plot(epochs, [r.loss for r in logs], color="tab:red", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss", color="tab:red")
    acc_ax = ax.twinx()
    acc_ax.plot(epochs, [r.train_acc for r in logs], color="tab:blue", label="train acc")
    if not all(math.isnan(r.holdout_acc) for r in logs):
        acc_ax.plot(
            epochs,
            [r.holdout_acc for r in logs],
            color="tab:green",
            linestyle="--",
            label="holdout acc",
        )
    acc_ax.set_ylabel("accuracy")
    acc_ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = acc_ax.get_legend_handles_labels()
    acc_ax.legend(lines + lines2, labels + labels2, loc="lower left", fontsize="small")


def render_training_curves(logs, path, title: str = "training run") -> None:
    """Loss and accuracy curves for one run."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    _curve_axes(ax, logs, title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_fold_curves(fold_logs: dict, path) -> None:
    """Small-multiple grid of per-fold training curves."""
    n = max(1, len(fold_logs))
    cols = min(3, n)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(5.5 * cols, 3.6 * rows), squeeze=False)
    flat = axes.ravel()
    for ax, (name, logs) in zip(flat, sorted(fold_logs.items())):
        _curve_axes(ax, logs, str(name))
    for ax in flat[len(fold_logs) :]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metric_bars(rows: list[dict], path, title: str = "variant comparison") -> None:
    """Grouped bars: one cluster per row (``name`` key), one bar per metric."""
    names = [r["name"] for r in rows]
    x = np.arange(len(names))
    width = 0.8 / len(METRIC_KEYS)
    fig, ax = plt.subplots(figsize=(1.6 * max(6, len(names) + 2), 4.5))
    for i, key in enumerate(METRIC_KEYS):
        vals = [r[key] for r in rows]
        ax.bar(x + (i - (len(METRIC_KEYS) - 1) / 2) * width, vals, width, label=key)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_attention_heatmap(
    weights_by_layer: dict[str, np.ndarray], example_ids, path
) -> None:
    """One heatmap panel per attention layer, rows = examples, cols = steps."""
    layers = [(k, v) for k, v in weights_by_layer.items() if v is not None]
    if not layers:
        raise ValueError("no attention layers to render")
    fig, axes = plt.subplots(1, len(layers), figsize=(5.5 * len(layers), 4.2),
                             squeeze=False)
    for ax, (name, w) in zip(axes.ravel(), layers):
        im = ax.imshow(w, aspect="auto", cmap="viridis", vmin=0.0)
        ax.set_title(f"{name} attention")
        ax.set_xlabel("context step")
        ax.set_yticks(range(len(example_ids)))
        ax.set_yticklabels(example_ids, fontsize="x-small")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
