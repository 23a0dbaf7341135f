"""Render report figures from the CSV artifacts of an analysis run."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURES = ("fig_indices.png", "fig_projection.png", "fig_convergence.png")
_PNG_META = {"Software": None}


def read_table(path) -> list[dict]:
    """Rows of a CSV artifact as dicts, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return np.nan


def plot_indices(rows, names, path):
    fig, ax = plt.subplots(figsize=(1.2 * len(names) + 3, 3.5))
    x = np.arange(len(names))
    for off, order, label in ((-0.18, "first", "first order"), (0.18, "total", "total order")):
        sel = {r["param_i"]: r for r in rows if r["order"] == order}
        mean = np.array([_float(sel[n]["mean"]) if n in sel else np.nan for n in names])
        half = np.array([_float(sel[n]["ci95_total"]) if n in sel else np.nan for n in names])
        ax.bar(x + off, mean, width=0.36, yerr=half, capsize=3, label=label)
    ax.set_xticks(x, names, rotation=30, ha="right")
    ax.set_ylabel("Sobol' index")
    ax.set_ylim(bottom=min(0.0, ax.get_ylim()[0]))
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_projection(rows, names, path):
    cols = min(3, len(names))
    nrows = -(-len(names) // cols)
    fig, axes = plt.subplots(nrows, cols, figsize=(3.2 * cols, 2.6 * nrows), squeeze=False)
    for ax, name in zip(axes.flat, names):
        sel = [r for r in rows if r["param"] == name]
        c = np.array([_float(r["center"]) for r in sel])
        ax.fill_between(c, [_float(r["lo95"]) for r in sel], [_float(r["hi95"]) for r in sel],
                        alpha=0.3, linewidth=0)
        ax.plot(c, [_float(r["mean"]) for r in sel], marker=".")
        ax.set_xlabel(name)
    for ax in list(axes.flat)[len(names):]:
        ax.set_visible(False)
    axes[0, 0].set_ylabel("posterior mean")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_convergence(rows, names, path):
    fig, (ax_s, ax_q) = plt.subplots(1, 2, figsize=(9, 3.5))
    for k, name in enumerate(names):
        color = f"C{k % 10}"
        for order, style in (("first", "-"), ("total", "--")):
            sel = [r for r in rows if r["param"] == name and r["order"] == order]
            ax_s.plot([int(r["n_train"]) for r in sel], [_float(r["mean"]) for r in sel],
                      style, color=color, marker="o", label=name if order == "first" else None)
    ax_s.set_xlabel("training runs N")
    ax_s.set_ylabel("index (solid first, dashed total)")
    ax_s.legend(frameon=False, fontsize="small")
    sizes = sorted({int(r["n_train"]) for r in rows})
    for key, label in (("q2_loo", "leave-one-out"), ("q2_test", "held-out")):
        q = [_float(next(r[key] for r in rows if int(r["n_train"]) == n)) for n in sizes]
        if np.any(np.isfinite(q)):
            ax_q.plot(sizes, q, marker="o", label=label)
    ax_q.set_xlabel("training runs N")
    ax_q.set_ylabel("Q2")
    ax_q.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def render_figures(root, names) -> list[Path]:
    """Write the PNG figures next to the CSV artifacts in ``root``."""
    root = Path(root)
    names = list(names)
    out = [root / f for f in FIGURES]
    plot_indices(read_table(root / "indices.csv"), names, out[0])
    plot_projection(read_table(root / "projection.csv"), names, out[1])
    plot_convergence(read_table(root / "convergence.csv"), names, out[2])
    return out
