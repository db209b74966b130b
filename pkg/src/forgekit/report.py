"""Figure rendering for the CLI report paths (Agg backend, files only)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import ScoredSet, auc, roc_curve  # noqa: E402
from .synthesis import GroundTruthBundle  # noqa: E402


def bundle_overlay_figure(bundle: GroundTruthBundle, out_path: str | os.PathLike) -> None:
    """Image plus its mask/boundary/heatmap/consistency overlays."""
    panels = [("mask", bundle.mask), ("boundary", bundle.boundary),
              ("heatmap", bundle.heatmap), ("consistency", bundle.consistency)]
    fig, axes = plt.subplots(1, 5, figsize=(15, 3.2))
    axes[0].imshow(bundle.image, vmin=0, vmax=1)
    axes[0].set_title(f"image (label={bundle.label})")
    for ax, (name, overlay) in zip(axes[1:], panels):
        ax.imshow(bundle.image, vmin=0, vmax=1)
        im = ax.imshow(overlay, cmap="magma", vmin=0, vmax=1, alpha=0.6)
        ax.set_title(name)
        fig.colorbar(im, ax=ax, fraction=0.046)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    if bundle.anchor is not None:
        axes[4].plot(bundle.anchor[1], bundle.anchor[0], "c+", markersize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def training_curves_figure(log_lines: list[str], out_path: str | os.PathLike) -> None:
    rows = [line.split(",") for line in log_lines[1:]]
    epochs = [int(r[0]) for r in rows]
    losses = [float(r[1]) for r in rows]
    aucs = [float(r[2]) for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(epochs, losses, "C0-", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(epochs, aucs, "C1-", label="val AUC")
    ax2.set_ylabel("val AUC", color="C1")
    ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def roc_figure(scored: ScoredSet, out_path: str | os.PathLike) -> None:
    fpr, tpr = roc_curve(scored)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(fpr, tpr, "C0-", label=f"AUC = {auc(scored):.4f}")
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
