"""Evaluation reports: confusion matrices as CSV and rendered figures.

Every report path writes a machine-readable delimited file first and a
matplotlib figure next to it. Figures use a grayscale convention where
darker means larger.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """Per-class prediction counts: rows are the truth, columns the
    prediction. Overall accuracy is the trace over the total."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts shape {self.counts.shape} does not match "
                             f"{k} class names")

    @classmethod
    def from_predictions(cls, truth: Sequence[int], predicted: Sequence[int],
                         class_names: Sequence[str]) -> "ConfusionMatrix":
        k = len(class_names)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (np.asarray(truth), np.asarray(predicted)), 1)
        return cls(counts, tuple(class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def per_class_accuracy(self) -> np.ndarray:
        """Diagonal over row sums; classes with no test blocks report 0."""
        rows = self.counts.sum(axis=1)
        diag = np.diag(self.counts).astype(np.float64)
        return np.divide(diag, rows, out=np.zeros_like(diag), where=rows > 0)


def write_confusion_csv(path, cm: ConfusionMatrix) -> None:
    """Counts matrix with a truth-label leading column and predicted-label
    header row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth\\predicted", *cm.class_names])
        for name, row in zip(cm.class_names, cm.counts):
            writer.writerow([name, *row.tolist()])


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def save_confusion_heatmap(path, cm: ConfusionMatrix,
                           title: Optional[str] = None) -> None:
    """Grayscale heat map of the confusion counts, darker is larger."""
    plt = _pyplot()
    k = len(cm.class_names)
    size = max(4.0, min(12.0, 0.28 * k + 2.5))
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(cm.counts, cmap="Greys", interpolation="nearest")
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    if k <= 30:
        ax.set_xticks(range(k), cm.class_names, rotation=90, fontsize=7)
        ax.set_yticks(range(k), cm.class_names, fontsize=7)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_history_curves(path, history) -> None:
    """Per-epoch loss and accuracy curves for train and validation."""
    plt = _pyplot()
    epochs = [h.epoch for h in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [h.train_loss for h in history], label="train")
    ax_loss.plot(epochs, [h.val_loss for h in history], label="val")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy")
    ax_loss.legend()
    ax_acc.plot(epochs, [h.train_acc for h in history], label="train")
    ax_acc.plot(epochs, [h.val_acc for h in history], label="val")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ei_traces(path, traces: Sequence[tuple[int, str, object, float]],
                   dim_names: Sequence[str]) -> None:
    """Expected-improvement trajectories: one panel per dimension, one
    line per candidate value, over post-warm-up trials."""
    plt = _pyplot()
    n = len(dim_names)
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.0 * cols, 3.0 * rows),
                             squeeze=False)
    by_dim: dict[str, dict[object, list[tuple[int, float]]]] = {d: {} for d in dim_names}
    for trial, dim, candidate, value in traces:
        by_dim.setdefault(dim, {}).setdefault(candidate, []).append((trial, value))
    for i, dim in enumerate(dim_names):
        ax = axes[i // cols][i % cols]
        for candidate, points in sorted(by_dim[dim].items(), key=lambda kv: str(kv[0])):
            xs, ys = zip(*points)
            ax.plot(xs, ys, label=str(candidate), linewidth=1.0)
        ax.set_title(dim, fontsize=9)
        ax.set_xlabel("trial")
        ax.set_ylabel("expected improvement")
        ax.legend(fontsize=6)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
