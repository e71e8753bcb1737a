"""Static figures for result bundles (Agg backend, reproducible PNG bytes)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no software/version stamp, so identical data gives identical files
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_loss_traces(results, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for r in results:
        if r.status == "ok" and r.loss_trace:
            ax.plot(np.arange(len(r.loss_trace)), r.loss_trace, lw=1, alpha=0.8,
                    label=f"rep {r.replication}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    if len(results) <= 10:
        ax.legend(fontsize=6)
    return _save(fig, path)


def plot_series(rows, x_key: str, metric: str, path, logx=False, logy=False) -> Path:
    """Mean with a one-standard-deviation band from a sweep series."""
    x = np.array([float(r[x_key]) for r in rows])
    m = np.array([float(r[f"{metric}_mean"]) for r in rows])
    s = np.array([float(r[f"{metric}_std"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(x, m, "o-", lw=1.5)
    ax.fill_between(x, m - s, m + s, alpha=0.2)
    ax.set_xlabel(x_key)
    ax.set_ylabel(metric)
    if logx:
        ax.set_xscale("log")
    if logy and np.all(m - s > 0):
        ax.set_yscale("log")
    return _save(fig, path)
