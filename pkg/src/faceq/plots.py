"""Render evaluation curves to image files next to their delimited output."""

from __future__ import annotations

from pathlib import Path

from .evaluation import Curve

_LABELS = {
    "FNMR": ("fraction of probes rejected", "FNMR at fixed threshold"),
    "FMR": ("fraction of probes rejected", "FMR at fixed threshold"),
    "ROC": ("FAR", "TAR"),
    "SWEEP": ("quality percentile threshold", "FNMR at fixed threshold"),
}


def plot_curve(curve: Curve, path: str | Path, title: str | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xlabel, ylabel = _LABELS.get(curve.kind, ("x", "y"))
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(curve.xs, curve.ys, marker="o", markersize=3, linewidth=1.2)
    if curve.kind == "ROC" and len(curve.xs) > 1 and min(curve.xs) > 0:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_histogram(
    counts, edges, path: str | Path, xlabel: str, title: str | None = None
) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    widths = [b - a for a, b in zip(edges, edges[1:])]
    ax.bar(edges[:-1], counts, width=widths, align="edge", edgecolor="white")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    ax.grid(True, alpha=0.3, axis="y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
