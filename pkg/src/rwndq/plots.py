"""Figures written next to the CSV artifacts of ``run`` and ``compare``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricsRecord  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 110,
    "savefig.bbox": "tight",
}

# DropTail, RWNDQ, ECN/DCTCP
COLORS = {"droptail": "#7f7f7f", "rwndq": "#1f77b4", "ecn_dctcp": "#d62728"}


def occupancy_series(rec: MetricsRecord, port_id: str | None = None):
    """Per-sample-interval mean queue length (bytes) of a port."""
    samples = rec.port(port_id or rec.bottleneck).area_samples
    t = np.array([s[0] for s in samples])
    a = np.array([s[1] for s in samples])
    if len(t) < 2:
        return np.array([]), np.array([])
    dt = np.diff(t)
    keep = dt > 0
    return t[1:][keep], np.diff(a)[keep] / dt[keep]


def _fct_cdf(ax, fcts, label, color=None):
    xs = np.sort(np.asarray(fcts))
    if xs.size:
        ax.step(xs * 1e3, np.arange(1, xs.size + 1) / xs.size, where="post", label=label, color=color)


def plot_run(rec: MetricsRecord, out_dir, buffer_bytes: int | None = None) -> list[Path]:
    out = Path(out_dir)
    paths = []
    with plt.rc_context(STYLE):
        t, q = occupancy_series(rec)
        fig, ax = plt.subplots(figsize=(5, 2.6))
        ax.plot(t, q / 1024, lw=0.8)
        if buffer_bytes:
            ax.axhline(buffer_bytes / 1024, ls=":", color="k", lw=0.8, label="buffer")
            ax.legend(loc="upper right")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("queue (KB)")
        ax.set_title(f"bottleneck {rec.bottleneck}")
        paths.append(out / "queue.png")
        fig.savefig(paths[-1])
        plt.close(fig)

        fcts = [f.fct for f in rec.mice() if f.completed]
        if fcts:
            fig, ax = plt.subplots(figsize=(4, 2.6))
            _fct_cdf(ax, fcts, None)
            ax.set_xscale("log")
            ax.set_xlabel("mice FCT (ms)")
            ax.set_ylabel("CDF")
            paths.append(out / "fct_cdf.png")
            fig.savefig(paths[-1])
            plt.close(fig)
    return paths


def plot_comparison(labels, records: list[MetricsRecord], out_dir) -> list[Path]:
    out = Path(out_dir)
    paths = []
    kinds = [r.summary["aqm"] for r in records]
    colors = [COLORS.get(k) for k in kinds]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7, 2.8))
        x = np.arange(len(labels))
        axes[0].bar(x, [r.summary["total_drops"] for r in records], color=colors)
        axes[0].set_xticks(x, labels, rotation=20)
        axes[0].set_ylabel("packet drops")
        width = 0.27
        for i, (key, name) in enumerate((("mice_fct_avg_s", "avg"), ("mice_fct_std_s", "std"),
                                         ("mice_fct_max_s", "max"))):
            vals = [r.summary[key] * 1e3 for r in records]
            axes[1].bar(x + (i - 1) * width, vals, width, label=name)
        axes[1].set_xticks(x, labels, rotation=20)
        axes[1].set_yscale("log")
        axes[1].set_ylabel("mice FCT (ms)")
        axes[1].legend()
        paths.append(out / "comparison.png")
        fig.savefig(paths[-1])
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(5, 2.6))
        for label, rec, c in zip(labels, records, colors):
            t, q = occupancy_series(rec)
            ax.plot(t, q / 1024, lw=0.8, label=label, color=c)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("bottleneck queue (KB)")
        ax.legend(loc="upper right")
        paths.append(out / "queue_comparison.png")
        fig.savefig(paths[-1])
        plt.close(fig)
    return paths
