"""Static figures written with matplotlib's Agg backend.

SVG output is made reproducible by fixing the hash salt and dropping the
date metadata, so repeated runs give identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "ergmmd", "svg.fonttype": "path"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plane(samples: np.ndarray) -> list[int]:
    """The two coordinates with the largest spread."""
    if samples.shape[1] <= 2:
        return list(range(samples.shape[1]))
    return sorted(np.argsort(np.ptp(samples, axis=0))[-2:].tolist())


def plot_coverage(samples, path_points, out_path, title: str = "") -> None:
    """Samples and the projected trajectory on their widest 2D plane."""
    S = np.asarray(samples, dtype=float)
    P = np.asarray(path_points, dtype=float)
    axes = _plane(S)
    if len(axes) == 1:
        S = np.column_stack([S[:, 0], np.zeros(len(S))])
        P = np.column_stack([P[:, 0], np.zeros(len(P))])
        axes = [0, 1]
    names = "xyz"
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(S[:, axes[0]], S[:, axes[1]], s=4, c="0.6", label="samples")
        ax.plot(P[:, axes[0]], P[:, axes[1]], "-", c="tab:blue", lw=1.2, label="trajectory")
        ax.plot(P[0, axes[0]], P[0, axes[1]], "o", c="tab:green", label="start")
        ax.plot(P[-1, axes[0]], P[-1, axes[1]], "s", c="tab:red", label="end")
        ax.set_xlabel(names[axes[0]])
        ax.set_ylabel(names[axes[1]])
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="best", fontsize=8)
        if title:
            ax.set_title(title)
        _save(fig, out_path)


def plot_history(history: list[dict], out_path) -> None:
    """Objective and constraint violation per outer iteration."""
    outer = [h["outer"] for h in history]
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
        a1.plot(outer, [h["emmd"] for h in history], "o-")
        a1.set_xlabel("outer iteration")
        a1.set_ylabel("metric")
        a2.semilogy(outer, [max(h["violation"], 1e-16) for h in history], "o-")
        a2.set_xlabel("outer iteration")
        a2.set_ylabel("constraint violation")
        fig.tight_layout()
        _save(fig, out_path)


def plot_benchmark(rows: list[dict], out_path) -> None:
    """Log-log timing against T (fixed M) and against M (fixed T)."""
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
        for ax, var, fixed in ((a1, "T", "M"), (a2, "M", "T")):
            groups = sorted({(r["dim"], r[fixed]) for r in rows})
            for d, f in groups:
                sel = sorted((r[var], r["median_seconds"]) for r in rows
                             if r["dim"] == d and r[fixed] == f)
                if len(sel) > 1:
                    x, y = zip(*sel)
                    ax.loglog(x, y, "o-", label=f"dim={d}, {fixed}={f}")
            ax.set_xlabel(var)
            ax.set_ylabel("median seconds")
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, out_path)
