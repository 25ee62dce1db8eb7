"""Matplotlib renderings written next to the delimited outputs.

Every function takes already-computed data and a destination path, draws one
PNG with the Agg backend, and returns the path. No interactivity, no display
server required.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_training_curves",
    "save_signature_heatmap",
    "save_signature_profiles",
    "save_bound_scatter",
    "save_ablation_bars",
]


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_training_curves(records: Sequence, path: str | Path) -> Path:
    """Loss components on the left axis, target accuracy on the right."""
    epochs = [r.epoch for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [r.l_source for r in records], label="source CE")
    ax.plot(epochs, [r.l_target for r in records], label="target entropy")
    ax.plot(epochs, [r.l_domain for r in records], label="domain")
    ax.plot(epochs, [r.total for r in records], label="total", color="black", lw=1.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(loc="upper left", fontsize=8)
    acc = [r.accuracy for r in records]
    if any(np.isfinite(a) for a in acc):
        twin = ax.twinx()
        twin.plot(epochs, acc, color="tab:red", ls="--", label="target acc")
        twin.set_ylabel("target accuracy")
        twin.set_ylim(0.0, 1.0)
    ax.set_title("training trajectory")
    return _finish(fig, path)


def save_signature_heatmap(corr: np.ndarray, path: str | Path) -> Path:
    """Class-by-class correlation of spectral signatures across domains."""
    fig, ax = plt.subplots(figsize=(4.5, 4))
    image = ax.imshow(corr, cmap="RdBu_r", vmin=-1.0, vmax=1.0)
    ax.set_xlabel("target class")
    ax.set_ylabel("source class")
    ax.set_xticks(range(corr.shape[1]))
    ax.set_yticks(range(corr.shape[0]))
    for i in range(corr.shape[0]):
        for j in range(corr.shape[1]):
            ax.text(j, i, f"{corr[i, j]:.2f}", ha="center", va="center", fontsize=8)
    fig.colorbar(image, ax=ax, shrink=0.85)
    ax.set_title("cross-domain signature correlation")
    return _finish(fig, path)


def save_signature_profiles(
    source_signatures: dict[int, np.ndarray],
    target_signatures: dict[int, np.ndarray],
    path: str | Path,
) -> Path:
    """Per-class spectral energy profiles, source solid, target dashed."""
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for class_id, sig in sorted(source_signatures.items()):
        color = colors[class_id % len(colors)]
        ax.plot(sig, color=color, label=f"source c{class_id}")
        if class_id in target_signatures:
            ax.plot(target_signatures[class_id], color=color, ls="--", label=f"target c{class_id}")
    ax.set_xlabel("eigenvalue rank (resampled)")
    ax.set_ylabel("normalized magnitude")
    ax.legend(fontsize=7, ncols=2)
    ax.set_title("per-class spectral signatures")
    return _finish(fig, path)


def save_bound_scatter(reports: Sequence, path: str | Path) -> Path:
    """lhs against first-order rhs per trial; points under the diagonal
    satisfy the bound."""
    lhs = np.array([r.lhs for r in reports])
    rhs = np.array([r.first_order_rhs for r in reports])
    fig, ax = plt.subplots(figsize=(4.8, 4.4))
    ax.scatter(rhs, lhs, s=14, alpha=0.7, edgecolors="none")
    top = max(float(lhs.max(initial=0.0)), float(rhs.max(initial=0.0)), 1e-12)
    ax.plot([0.0, top], [0.0, top], color="gray", lw=1, ls=":")
    ax.set_xlabel("first-order bound")
    ax.set_ylabel("observed gap")
    held = int(sum(r.holds for r in reports))
    ax.set_title(f"stability bound: {held}/{len(reports)} trials hold")
    return _finish(fig, path)


def save_ablation_bars(accuracies: dict[str, float], path: str | Path) -> Path:
    """Final target accuracy per variant."""
    names = list(accuracies)
    values = [accuracies[n] for n in names]
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    bars = ax.bar(names, values, color="tab:blue")
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_ylabel("target accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("variant comparison")
    ax.tick_params(axis="x", rotation=20)
    return _finish(fig, path)
