"""Static ROC plot rendering for evaluation reports."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_roc_grid(curves: dict, path: str, title: str) -> None:
    """One subplot per evaluator; one line per score group.

    ``curves`` maps evaluator name -> {group tag -> RocCurve}.
    """
    names = [n for n in curves if curves[n]]
    if not names:
        return
    cols = min(3, len(names))
    rows_n = math.ceil(len(names) / cols)
    fig, axes = plt.subplots(rows_n, cols, figsize=(4.2 * cols, 3.6 * rows_n),
                             squeeze=False)
    for k, name in enumerate(names):
        ax = axes[k // cols][k % cols]
        for tag, curve in sorted(curves[name].items()):
            style = "--" if tag == "original" else "-"
            lw = 2.0 if tag in ("original", "best", "random") else 1.0
            ax.plot(curve.fpr, curve.tpr, style, linewidth=lw,
                    label=f"{tag} (AUC {curve.auc:.2f})")
        ax.plot([0, 1], [0, 1], ":", color="gray", linewidth=0.8)
        ax.set_title(name)
        ax.set_xlabel("FPR")
        ax.set_ylabel("TPR")
        ax.legend(fontsize=6)
    for k in range(len(names), rows_n * cols):
        axes[k // cols][k % cols].axis("off")
    fig.suptitle(title)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
