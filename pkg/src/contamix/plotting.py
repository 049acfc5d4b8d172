"""SVG figures rendered with matplotlib.

Output is byte-deterministic: the SVG hash salt is fixed and the date
metadata is dropped.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

from .exceptions import DataError  # noqa: E402

_RC = {"svg.hashsalt": "contamix", "svg.fonttype": "path", "path.simplify": False}
_META = {"Date": None, "Creator": "contamix"}
POINT_GID = "points"


def _colors(G):
    cmap = plt.get_cmap("tab10")
    return [cmap(g % 10) for g in range(max(G, 1))]


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def emit_svg_scatter(X, clusters, bad, path, columns=("x1", "x2"), title=None):
    """Scatter of 2-D data, one color per cluster, bad points as filled discs.

    Good points are open circles. Every observation yields exactly one marker
    inside an SVG group whose id starts with ``points``.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        X = X.reshape(0, 2) if X.ndim < 2 or X.shape[1] == 0 else X
    if X.ndim != 2 or X.shape[1] != 2:
        raise DataError(f"scatter plots need exactly 2 variables, got {X.shape[-1] if X.ndim == 2 else X.ndim}")
    clusters = np.asarray(clusters, dtype=int).reshape(-1)
    bad = np.asarray(bad, dtype=bool).reshape(-1)
    if clusters.shape[0] != X.shape[0] or bad.shape[0] != X.shape[0]:
        raise DataError("labels must have one entry per row")
    G = int(clusters.max()) if clusters.size else 0
    colors = _colors(G)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 5))
        handles = []
        for g in range(1, G + 1):
            col = colors[g - 1]
            good_idx = (clusters == g) & ~bad
            bad_idx = (clusters == g) & bad
            for idx, kind, face in ((good_idx, "good", "none"), (bad_idx, "bad", col)):
                if idx.any():
                    ax.scatter(
                        X[idx, 0], X[idx, 1], s=22, marker="o", facecolors=face,
                        edgecolors=[col], linewidths=1.0, gid=f"{POINT_GID}-{g}-{kind}",
                    )
            handles.append(Line2D([], [], ls="none", marker="o", mfc="none", mec=col, label=f"cluster {g}"))
        if bad.any():
            handles.append(Line2D([], [], ls="none", marker="o", mfc="0.3", mec="0.3", label="bad"))
        if handles:
            ax.legend(handles=handles, loc="best", frameon=False)
        ax.set_xlabel(columns[0])
        ax.set_ylabel(columns[1])
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_eta_curve(values, etas, path, xlabel="perturbation value", title=None):
    """Line plot of estimated inflation against the perturbed value."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(values, etas, marker="o", color="C0", gid="eta-curve")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("estimated eta (outlier's group)")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_bic_grid(ranking, path, title=None):
    """BIC against G, one line per covariance structure."""
    by_structure = {}
    for r in ranking:
        by_structure.setdefault(r.structure, []).append((r.G, r.bic))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 5))
        for k, (s, pts) in enumerate(sorted(by_structure.items())):
            pts.sort()
            ax.plot([g for g, _ in pts], [b for _, b in pts], marker="o", lw=1,
                    color=plt.get_cmap("tab20")(k % 20), label=s)
        ax.set_xlabel("G")
        ax.set_ylabel("BIC")
        if by_structure:
            ax.legend(ncol=2, fontsize="small", frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
