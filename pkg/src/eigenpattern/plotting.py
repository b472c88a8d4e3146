"""Figures written next to the CLI's delimited reports.

Everything renders off-screen (Agg backend). SVG output is static and
reproducible: no dates in the metadata and fixed element ids.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .linalg import cumulative_energy, normalized_singular_values  # noqa: E402

CLASS_COLORS = ("#4c72b0", "#dd8452", "#55a868")  # A, B, C
CLASS_NAMES = ("A (dots)", "B (mixed)", "C (fingers)")
CLASSIFIER_STYLE = {
    "knn": ("kNN", "#c44e52"),
    "tree": ("Tree", "#4c72b0"),
    "gnb": ("NB", "#55a868"),
    "lda": ("LD", "#8172b2"),
}

_RC = {
    "svg.hashsalt": "eigenpattern",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
}


def _save(fig, path, fmt=None):
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "png"
    metadata = {"Date": None} if fmt == "svg" else ({"Software": None} if fmt == "png" else None)
    with plt.rc_context(_RC):
        fig.savefig(path, format=fmt, metadata=metadata, bbox_inches="tight", dpi=150)
    plt.close(fig)
    return path


def _figure(width=5.0, height=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    with plt.rc_context(_RC):
        return plt.subplots(figsize=(width, height or width * golden))


def plot_regime_map(rmap, path, fmt=None):
    """Class-colored cells over (velocity, tonal value) plus the two border polylines."""
    vel = np.asarray(rmap.velocities)
    ton = np.asarray(rmap.tonal_values)
    fig, ax = _figure(5.5)
    # cell edges halfway between neighbouring grid values
    def edges(v):
        if v.size == 1:
            return np.array([v[0] - 0.5, v[0] + 0.5])
        mid = 0.5 * (v[1:] + v[:-1])
        return np.concatenate([[v[0] - (mid[0] - v[0])], mid, [v[-1] + (v[-1] - mid[-1])]])

    mesh = ax.pcolormesh(edges(vel), edges(ton), rmap.majority.T, cmap=ListedColormap(CLASS_COLORS),
                         vmin=-0.5, vmax=2.5, shading="flat", alpha=0.6)
    mesh.set_gid("cells")
    for which, style in (("lower", "-"), ("upper", "--")):
        pts = rmap.border_polyline(which)
        if not pts:
            continue
        xs, ys = zip(*pts)
        (line,) = ax.plot(xs, ys, style, color="black", lw=1.5, label=f"{which} border")
        line.set_gid(f"border-{which}")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c, alpha=0.6) for c in CLASS_COLORS]
    ax.legend(handles + ax.get_lines(), list(CLASS_NAMES) + [l.get_label() for l in ax.get_lines()],
              loc="upper left", bbox_to_anchor=(1.01, 1.0))
    ax.set_xlabel("Printing velocity in m/min")
    ax.set_ylabel("Tonal value in %")
    title = rmap.experiment or "regime map"
    if np.isfinite(rmap.raster_frequency):
        title += f" ({rmap.raster_frequency:g} lines/cm)"
    ax.set_title(title)
    return _save(fig, path, fmt)


def plot_sweep(rows, path, metric="error"):
    """Mean test error (or recall B) over truncation rank with +-1 std bands."""
    fig, ax = _figure()
    for clf in dict.fromkeys(r.classifier for r in rows):
        sub = sorted((r for r in rows if r.classifier == clf), key=lambda r: r.r)
        x = np.array([r.r for r in sub])
        if metric == "error":
            y = np.array([r.mean_error for r in sub])
            s = np.array([r.std_error for r in sub])
        else:
            y = np.array([r.recall_B for r in sub])
            s = np.array([r.std_recall_B for r in sub])
        name, color = CLASSIFIER_STYLE.get(clf, (clf, None))
        ax.plot(x, y, "-o", ms=3, color=color, label=name)
        ax.fill_between(x, y - s, y + s, color=color, alpha=0.2, lw=0)
    ax.set_xlabel("Rank of truncation r")
    ax.set_ylabel("Test error in %" if metric == "error" else "Recall B in %")
    ax.legend()
    return _save(fig, path)


def plot_confusion(cm, path, title=""):
    counts = np.asarray(cm.counts)
    fig, ax = _figure(3.2, 3.0)
    ax.imshow(counts, cmap="Blues")
    vmax = counts.max() or 1
    for i in range(3):
        for j in range(3):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center",
                    color="white" if counts[i, j] > 0.55 * vmax else "black")
    ax.set_xticks(range(3), ["A", "B", "C"])
    ax.set_yticks(range(3), ["A", "B", "C"])
    ax.set_xlabel("Prediction")
    ax.set_ylabel("Ground truth")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_spectrum(sigma, path, label=""):
    """Normalized singular values (log scale) and cumulative energy in %."""
    ns = normalized_singular_values(sigma)
    ce = cumulative_energy(sigma)
    k = np.arange(1, ns.size + 1)
    fig, ax = _figure()
    ax.semilogy(k, ns, ".", ms=3, color="#4c72b0", label=label or None)
    ax.set_xlabel("Mode k")
    ax.set_ylabel("Normalized singular value")
    ax2 = ax.twinx()
    ax2.plot(k, ce, "-", color="#c44e52")
    ax2.set_ylabel("Cumulative energy in %")
    ax2.set_ylim(0, 100)
    return _save(fig, path)


def plot_mode_grid(modes, path, titles=None, ncols=4):
    """Side-by-side grayscale panels of rendered modes."""
    n = len(modes)
    nrows = int(np.ceil(n / ncols))
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, figsize=(1.6 * ncols, 1.7 * nrows), squeeze=False)
    for k, ax in enumerate(axes.flat):
        ax.axis("off")
        if k < n:
            ax.imshow(modes[k], cmap="gray")
            ax.set_title(titles[k] if titles else f"#{k + 1:02d}", fontsize=8)
    return _save(fig, path)
