"""Matplotlib figures rendered next to the delimited report files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_accuracy_grid(results, out_dir) -> str:
    """Grouped Test1/Test2 accuracy bars, one group per (model, optimizer) cell."""
    os.makedirs(os.path.join(out_dir, "figures"), exist_ok=True)
    labels = [f"{r.model_kind}\n{r.optimizer}" for r in results]
    t1 = [r.test1_accuracy for r in results]
    t2 = [r.test2_accuracy for r in results]
    x = range(len(results))
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(results)), 4))
    ax.bar([i - 0.18 for i in x], t1, width=0.36, label="Test1 (pre-shift)")
    ax.bar([i + 0.18 for i in x], t2, width=0.36, label="Test2 (post-shift)")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("Test accuracy by model and optimizer")
    fig.tight_layout()
    path = os.path.join(out_dir, "figures", "accuracy_grid.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return "figures/accuracy_grid.png"


def plot_shift_deltas(results, out_dir) -> str:
    """Per-label precision degradation under shift for each cell."""
    os.makedirs(os.path.join(out_dir, "figures"), exist_ok=True)
    labels = [f"{r.model_kind}/{r.optimizer}" for r in results]
    d0 = [r.shift.delta_precision0 for r in results]
    d1 = [r.shift.delta_precision1 for r in results]
    x = range(len(results))
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(results)), 4))
    ax.bar([i - 0.18 for i in x], d0, width=0.36, label="label 0")
    ax.bar([i + 0.18 for i in x], d1, width=0.36, label="label 1")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, fontsize=8, rotation=20)
    ax.set_ylabel("precision delta (test2 - test1)")
    ax.legend(fontsize=8)
    ax.set_title("Precision degradation under distribution shift")
    fig.tight_layout()
    path = os.path.join(out_dir, "figures", "shift_deltas.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return "figures/shift_deltas.png"


def plot_training_history(history, out_dir, name: str = "phase1_training") -> str:
    os.makedirs(os.path.join(out_dir, "figures"), exist_ok=True)
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(history.loss) + 1)
    ax1.plot(epochs, history.loss, marker="o", color="tab:red", label="loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean BCE loss", color="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(epochs, history.accuracy, marker="s", color="tab:blue", label="accuracy")
    ax2.set_ylabel("train accuracy", color="tab:blue")
    ax2.set_ylim(0, 1.05)
    ax1.set_title("Sentiment model training")
    fig.tight_layout()
    path = os.path.join(out_dir, "figures", f"{name}.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return f"figures/{name}.png"
