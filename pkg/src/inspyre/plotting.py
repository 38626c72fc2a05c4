"""Static figures for training logs and evaluation reports."""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def read_ndjson(path: str) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _autoscale(ax, values) -> None:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v) & (v > 0)]
    if v.size and v.max() / v.min() > 20:
        ax.set_yscale("log")


def plot_training_log(records: list, path: str) -> str:
    """Total loss, per-stage wBCE, consistency terms and the lr schedule."""
    if not records:
        raise ValueError("training log is empty")
    it = np.array([r["iter"] for r in records])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(13, 3.1))
        total = [r["total"] for r in records]
        axes[0].plot(it, total, color="k", lw=1)
        axes[0].set(title="total loss", xlabel="iteration")
        _autoscale(axes[0], total)
        wb = [[r[f"wbce_{j}"] for r in records] for j in range(4)]
        for j, v in enumerate(wb):
            axes[1].plot(it, v, lw=1, label=f"stage {j}")
        axes[1].set(title="weighted BCE", xlabel="iteration")
        _autoscale(axes[1], np.concatenate(wb))
        axes[1].legend(fontsize=7)
        pc = [[r[f"pc_{j}"] for r in records] for j in range(3)]
        for j, v in enumerate(pc):
            axes[2].plot(it, v, lw=1, label=f"stages {j + 1}/{j}")
        axes[2].set(title="pyramidal consistency", xlabel="iteration")
        _autoscale(axes[2], np.concatenate(pc))
        axes[2].legend(fontsize=7)
        axes[3].plot(it, [r["lr"] for r in records], color="tab:purple", lw=1)
        axes[3].set(title="learning rate", xlabel="iteration")
        axes[3].ticklabel_format(axis="y", style="sci", scilimits=(-2, 2))
        return _save(fig, path)


def plot_f_curve(curve: dict, path: str) -> str:
    """F-measure against threshold, and the precision-recall curve."""
    t = np.asarray(curve["threshold"])
    f = np.asarray(curve["f"])
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7.5, 3.2))
        a.plot(t, f, color="tab:blue", lw=1.2)
        k = int(np.argmax(f))
        a.scatter([t[k]], [f[k]], color="tab:red", s=12, zorder=3)
        a.annotate(f"max {f[k]:.3f}", (t[k], f[k]), textcoords="offset points", xytext=(5, -12), fontsize=8)
        a.set(xlabel="threshold", ylabel="F-measure", xlim=(0, 1), ylim=(0, 1.02))
        p, r = np.asarray(curve["precision"]), np.asarray(curve["recall"])
        keep = (p > 0) | (r > 0)  # thresholds with no positive prediction have no PR point
        b.plot(r[keep], p[keep], color="tab:green", lw=1.2, marker=".", ms=2)
        b.set(xlabel="recall", ylabel="precision", xlim=(0, 1.02), ylim=(0, 1.02))
        return _save(fig, path)


def plot_metric_rows(rows: list, path: str) -> str:
    """One panel per metric with the per-image values and their mean."""
    keys = [k for k in ("s_measure", "f_max", "mae", "mba") if rows and k in rows[0]]
    if not keys:
        raise ValueError("no metric columns to plot")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(keys), figsize=(2.6 * len(keys), 3), squeeze=False)
        x = np.arange(len(rows))
        for ax, k in zip(axes[0], keys):
            v = np.array([r[k] for r in rows])
            ax.bar(x, v, color="tab:gray", width=0.8)
            ax.axhline(v.mean(), color="tab:red", lw=1, label=f"mean {v.mean():.3f}")
            ax.set(title=k, ylim=(0, 1), xlabel="image")
            ax.legend(fontsize=7, loc="lower right")
        return _save(fig, path)
