"""Static ribbon plots of aggregated benchmark metrics (SVG)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import BANDS  # noqa: E402

# Fixed hash salt and no date stamp: the same figure renders to the same bytes.
_RC = {"svg.hashsalt": "doublelayer", "svg.fonttype": "none", "path.simplify": True}

# Ribbons are drawn on at most this many abscissae to keep the SVG small.
MAX_RIBBON_POINTS = 500


def median_gid(label: str) -> str:
    return "median-" + "".join(c if c.isalnum() else "_" for c in label)


def ribbon_figure(aggregates, path, title: str = "", ylabel: str = r"$\log_{10}$ max prox ratio") -> None:
    """One bold median line per strategy over nested percentile ribbons.

    Each median line carries the SVG id ``median-<label>`` so the plot can
    be inspected programmatically.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        colors = plt.get_cmap("tab10")
        for i, agg in enumerate(aggregates):
            c = colors(i % 10)
            k = np.arange(agg.median.size)
            sub = np.unique(np.r_[k[:: max(1, k.size // MAX_RIBBON_POINTS)], k[-1]])
            # Widest band first so narrower ones sit on top.
            for p in sorted(BANDS, reverse=True):
                lo, hi = agg.bands[p]
                ax.fill_between(sub, lo[sub], hi[sub], color=c, alpha=0.08, linewidth=0)
            (line,) = ax.plot(k, agg.median, color=c, linewidth=2.0, label=agg.label)
            line.set_gid(median_gid(agg.label))
        ax.set_xlabel("iteration k")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8, loc="lower left")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
