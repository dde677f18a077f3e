"""Plot emission for evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluator import EvalReport  # noqa: E402


def plot_membership_histogram(report: EvalReport, path: str | Path) -> Path:
    """Histogram of per-sample membership in the true abstraction class."""
    path = Path(path)
    n = len(report.membership_bins)
    centers = [(i + 0.5) / n for i in range(n)]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(centers, report.membership_bins, width=0.9 / n, color="#4878cf")
    ax.set_xlabel("membership in true abstraction class")
    ax.set_ylabel("sketches")
    ax.set_xlim(0, 1)
    ax.set_title(f"abstraction membership ({report.which}, n={report.n_samples})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_accuracy_vs_abstraction(report: EvalReport, path: str | Path) -> Path:
    """Classification accuracy across the predicted abstraction spectrum."""
    path = Path(path)
    xs, ys, counts = [], [], []
    for row in report.score_curve:
        if row["accuracy"] is None:
            continue
        xs.append((row["lo"] + row["hi"]) / 2)
        ys.append(row["accuracy"])
        counts.append(row["count"])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if xs:
        ax.plot(xs, ys, marker="o", color="#d1495b")
        for x, y, c in zip(xs, ys, counts):
            ax.annotate(str(c), (x, y), textcoords="offset points",
                        xytext=(0, 6), fontsize=7, ha="center")
    ax.set_xlabel("predicted abstraction score (low -> high)")
    ax.set_ylabel("top-1 accuracy [%]")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 105)
    ax.set_title(f"accuracy vs predicted abstraction ({report.which})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
