"""Matplotlib figures written next to the CSV tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "axes.grid": True,
    "grid.alpha": 0.4,
    "grid.linewidth": 0.5,
    "savefig.bbox": "tight",
    # reproducible SVG ids
    "svg.hashsalt": "ddf",
}

_LABELS = {
    ("ddf", "acc_fused"): "DDF fused",
    ("ddf", "acc_time"): "DDF time model",
    ("ddf", "acc_tf"): "DDF TF model",
    ("self-training", "acc_time"): "Self-training",
}


def _save(fig, path):
    path = Path(path)
    fmt = path.suffix.lstrip(".") or "svg"
    fig.savefig(path, format=fmt, metadata={"Date": None} if fmt == "svg" else None)
    plt.close(fig)


def accuracy_curves(rows, path, noise: str | None = None):
    """Test accuracy against the share of training data, one line per
    (method, model) with a ±1 std band."""
    series = {}
    for r in rows:
        if noise is not None and r.noise != noise:
            continue
        key = (r.method, r.metric)
        if key in _LABELS:
            series.setdefault(key, []).append(r)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key in sorted(series):
            pts = sorted(series[key], key=lambda r: r.train_pct)
            x = np.array([r.train_pct for r in pts])
            m = np.array([r.mean for r in pts])
            s = np.array([r.std for r in pts])
            line, = ax.plot(x, 100 * m, marker="o", ms=3, label=_LABELS[key])
            ax.fill_between(x, 100 * (m - s), 100 * (m + s), color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("Training data (%)")
        ax.set_ylabel("Test accuracy (%)")
        ax.set_ylim(0, 100)
        if noise:
            ax.set_title(f"Noise: {noise}")
        if series:
            ax.legend(loc="best")
        _save(fig, path)


def sweep_bars(rows, path):
    """Validation accuracy per confidence threshold, best threshold highlighted."""
    rows = sorted(rows, key=lambda r: r.xi)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(rows))
        colors = ["C1" if r.selected else "C0" for r in rows]
        ax.bar(x, [100 * r.mean for r in rows], yerr=[100 * r.std for r in rows],
               color=colors, capsize=2, width=0.7)
        ax.set_xticks(x, [f"{r.xi:.1f}" for r in rows])
        ax.set_xlabel("Confidence threshold")
        ax.set_ylabel("Validation accuracy (%)")
        ax.set_ylim(0, 100)
        _save(fig, path)


def tfr_heatmap(values: np.ndarray, time_step_s: float, freq_step_hz: float, path):
    """One panel per channel, time on x and frequency on y."""
    if values.ndim == 2:
        values = values[np.newaxis]
    Q, nt, nf = values.shape
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, Q, squeeze=False, figsize=(3.2 * Q, 3.0))
        for q, ax in enumerate(axes[0]):
            ax.imshow(values[q].T, origin="lower", aspect="auto", cmap="viridis",
                      extent=(0, nt * time_step_s, 0, nf * freq_step_hz))
            ax.set_xlabel("Time (s)")
            ax.set_ylabel("Frequency (Hz)")
            ax.set_title(f"ch{q}")
            ax.grid(False)
        _save(fig, path)
