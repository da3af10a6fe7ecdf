"""
Figures rendered to SVG next to the CSV/JSON outputs.

SVGs are written with a fixed hash salt and no timestamp, so identical
inputs give byte-identical files.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

STYLE = {
    "svg.hashsalt": "orthomerge",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def save_svg(fig, path):
    buf = io.StringIO()
    with plt.rc_context(STYLE):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def _figure(size=(4.0, 3.2)):
    with plt.rc_context(STYLE):
        return plt.subplots(figsize=size)


def similarity_heatmap(sim, labels, path, title="task-vector cosine"):
    sim = np.asarray(sim)
    fig, ax = _figure((1.2 + 0.6 * len(labels), 1.0 + 0.6 * len(labels)))
    im = ax.imshow(sim, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    for i in range(sim.shape[0]):
        for j in range(sim.shape[1]):
            ax.text(j, i, f"{sim[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    fig.tight_layout()
    save_svg(fig, path)


def angle_histograms(summaries, path):
    """Overlayed column-angle histograms, one per labelled summary."""
    fig, ax = _figure((4.5, 3.0))
    for label, s in summaries.items():
        edges = np.asarray(s.edges)
        ax.stairs(s.counts, edges, label=label)
    ax.axvline(90.0, color="0.5", lw=0.8, ls="--")
    ax.set_xlabel("angle between columns (deg)")
    ax.set_ylabel("pairs")
    ax.legend(frameon=False)
    fig.tight_layout()
    save_svg(fig, path)


def alpha_curve(table, path, ylabel="objective"):
    fig, ax = _figure()
    alphas = [r.alpha for r in table]
    ax.plot(alphas, [r.objective for r in table], marker="o", ms=3)
    best = max(table, key=lambda r: (r.objective, -r.alpha))
    ax.axvline(best.alpha, color="0.5", lw=0.8, ls="--")
    ax.set_xlabel("alpha")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    save_svg(fig, path)


def training_history(history, path):
    fig, ax = _figure((4.5, 3.0))
    ax.plot(history.epoch, history.task_loss, label="task loss")
    ax.plot(history.epoch, history.ortho_loss, label="ortho loss")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_xlabel("epoch")
    ax.legend(frameon=False)
    fig.tight_layout()
    save_svg(fig, path)


def kernel_heatmap(k, path, title="|K|"):
    fig, ax = _figure()
    im = ax.imshow(np.abs(k), cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    fig.tight_layout()
    save_svg(fig, path)


def value_histogram(counts, edges, path, xlabel):
    fig, ax = _figure()
    ax.stairs(counts, np.asarray(edges), fill=True, alpha=0.6)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.tight_layout()
    save_svg(fig, path)
