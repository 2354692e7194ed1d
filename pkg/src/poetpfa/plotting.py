"""PNG figures for CLI reports.

Figures are drawn on bare :class:`matplotlib.figure.Figure` objects with the
Agg canvas (no pyplot state, no display needed).  PNG metadata is stripped
of the software tag so repeated runs give identical bytes.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .output import atomic_write_bytes

STYLE = {
    "figsize": (6.4, 4.0),
    "dpi": 120,
}
POET_COLOR = "#1f77b4"
KNOWN_COLOR = "#d62728"


def _new(ncols: int = 1, width: float | None = None) -> tuple[Figure, list]:
    w, h = STYLE["figsize"]
    fig = Figure(figsize=(width or w * ncols, h), dpi=STYLE["dpi"])
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, ncols, squeeze=False)[0]
    return fig, list(axes)


def save_png(fig: Figure, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    return atomic_write_bytes(path, buf.getvalue())


def fdp_vs_discoveries(R: Sequence[int], fdp_hat: Sequence[float], V_hat: Sequence[float], path, title: str = "") -> Path:
    """Estimated FDP and estimated false discoveries against the number of
    rejections."""
    R = np.asarray(R)
    fig, (left, right) = _new(2)
    left.plot(R, np.minimum(fdp_hat, 1.0), marker=".", color=POET_COLOR)
    left.set_xlabel("discoveries R(t)")
    left.set_ylabel("estimated FDP")
    right.plot(R, V_hat, marker=".", color=POET_COLOR)
    right.set_xlabel("discoveries R(t)")
    right.set_ylabel("estimated false discoveries")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return save_png(fig, path)


def adjusted_vs_unadjusted(R, fdp_hat, R_adj, fdp_adj, path) -> Path:
    fig, (ax,) = _new(1)
    ax.plot(R, np.minimum(fdp_hat, 1.0), marker=".", label="unadjusted", color=POET_COLOR)
    ax.plot(R_adj, np.minimum(fdp_adj, 1.0), marker=".", label="adjusted", color=KNOWN_COLOR)
    ax.set_xlabel("discoveries")
    ax.set_ylabel("estimated FDP")
    ax.legend(frameon=False)
    fig.tight_layout()
    return save_png(fig, path)


def experiment_scatter(fdp_true, fdp_known, fdp_poet, path, title: str = "") -> Path:
    """Realised FDP against the known-covariance and POET-based estimates."""
    fig, axes = _new(2)
    hi = max(1e-3, float(np.max(np.concatenate([fdp_true, fdp_known, fdp_poet]))))
    for ax, est, label, color in (
        (axes[0], fdp_known, "known covariance", KNOWN_COLOR),
        (axes[1], fdp_poet, "POET", POET_COLOR),
    ):
        ax.scatter(fdp_true, est, s=8, color=color, alpha=0.6)
        ax.plot([0, hi], [0, hi], color="0.4", lw=0.8)
        ax.set_xlabel("realised FDP")
        ax.set_ylabel(f"estimated FDP ({label})")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return save_png(fig, path)


def k_sweep_boxplot(ks: Sequence[int], direct_errors: Sequence[np.ndarray], path) -> Path:
    fig, (ax,) = _new(1)
    ax.boxplot([100.0 * np.asarray(d) for d in direct_errors])
    ax.set_xticks(np.arange(1, len(ks) + 1), [str(k) for k in ks])
    ax.axhline(0.0, color="0.4", lw=0.8)
    ax.set_xlabel("number of factors K")
    ax.set_ylabel("direct error (%)")
    fig.tight_layout()
    return save_png(fig, path)


def power_bars(fdr: Sequence[float], fnr: Sequence[float], labels: Sequence[str], path) -> Path:
    fig, (ax,) = _new(1)
    x = np.arange(len(labels))
    ax.bar(x - 0.2, 100.0 * np.asarray(fdr), width=0.4, label="FDR", color=POET_COLOR)
    ax.bar(x + 0.2, 100.0 * np.asarray(fnr), width=0.4, label="FNR", color=KNOWN_COLOR)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("percent")
    ax.legend(frameon=False)
    fig.tight_layout()
    return save_png(fig, path)
