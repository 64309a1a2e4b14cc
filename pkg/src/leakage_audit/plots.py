"""Figure rendering for the report paths.

Both entry points write straight to a file next to the delimited output;
matplotlib is imported lazily with the Agg backend so headless runs and
plain library use never touch a display.
"""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_importance_figure(curves, path: str | Path, title: str = "Identity-overlap bias vs test difficulty") -> None:
    """Scatter+line of importance against difficulty, one series per method.

    ``curves`` is the mapping produced by :func:`report.importance_curve`.
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for method, points in curves.items():
        xs = [float(p.difficulty) for p in points]
        ys = [float(p.importance) for p in points]
        ax.plot(xs, ys, marker="o", linewidth=1.2, label=method)
        for p in points:
            ax.annotate(
                p.test_set,
                (float(p.difficulty), float(p.importance)),
                textcoords="offset points",
                xytext=(4, 4),
                fontsize=7,
            )
    ax.set_xlabel("difficulty (mean accuracy of the two variants, %)")
    ax.set_ylabel("importance (overlap minus disjoint accuracy, %)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_histogram_figure(bins, path: str | Path, title: str = "Similarity distribution") -> None:
    """Bar chart of similarity-score bins from :func:`matcher.histogram`."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    lefts = [b.lo for b in bins]
    widths = [b.hi - b.lo for b in bins]
    counts = [b.count for b in bins]
    ax.bar(lefts, counts, width=widths, align="edge", edgecolor="white", linewidth=0.4)
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("pair count")
    ax.set_title(title)
    ax.set_xlim(-1.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
