"""Figure rendering for experiment reports.

PNG files are written next to the delimited output of a run.  Rendering is
headless (Agg) and purely a view over the summary/delay data; nothing here
feeds back into any computation.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def metric_figure(summary: dict, path) -> None:
    """Mean final metric per method with std error bars and bound markers."""
    methods = summary["methods"]
    labels = [m["label"] for m in methods]
    means = [m["mean"] for m in methods]
    stds = [m["std"] for m in methods]
    bounds = [m.get("bound_value") for m in methods]

    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(labels)), 3.6))
    x = np.arange(len(labels))
    ax.errorbar(x, means, yerr=stds, fmt="o", capsize=4, label="empirical mean")
    bx = [i for i, b in enumerate(bounds) if b is not None and np.isfinite(b)]
    if bx:
        ax.scatter(bx, [bounds[i] for i in bx], marker="_", s=400, color="tab:red",
                   label="guarantee")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(summary.get("metric", "final metric"))
    finite = [v for v in means + [bounds[i] for i in bx] if v is not None and v > 0]
    if finite and max(finite) / max(min(finite), 1e-300) > 50:
        ax.set_yscale("log")
    ax.set_title(summary.get("name", "experiment"))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def delay_figure(delays, path, title: str = "delay sequence") -> None:
    """Per-round delay profile of one realized sequence."""
    d = np.asarray(delays.delays)
    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    ax.plot(np.arange(1, d.size + 1), d, lw=0.9)
    ax.set_xlabel("round t")
    ax.set_ylabel("d_t")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
