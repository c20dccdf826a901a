"""Matplotlib figures written next to the CSV artifacts."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_columns(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return header, data


def plot_voltage_profile(csv_path, png_path, title=None):
    """Plot every ``v_<mode>`` column of a plot-data CSV against ``t``."""
    header, data = _read_columns(csv_path)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for k, name in enumerate(header[1:], start=1):
        ax.plot(data[:, 0], data[:, k], lw=0.8, label=name.removeprefix("v_"))
    ax.set_xlabel("t (s)")
    ax.set_ylabel("V (p.u.)")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return Path(png_path)


def plot_trajectory(csv_path, png_path, channel="v", buses=None, title=None):
    """Plot one channel of a trajectory CSV (all buses unless ``buses`` is given)."""
    header, data = _read_columns(csv_path)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for k, name in enumerate(header):
        if not name.startswith(channel + "_"):
            continue
        bus = int(name.split("_", 1)[1])
        if buses is not None and bus not in buses:
            continue
        ax.plot(data[:, 0], data[:, k], lw=0.6)
    ax.set_xlabel("t (s)")
    ax.set_ylabel(channel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return Path(png_path)


def plot_lambda(report, png_path):
    """Bar chart of the per-mode mean performance index with per-seed markers."""
    modes = report.experiment["modes"]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for i, mode in enumerate(modes):
        vals = [x for x in report.lambdas(mode) if x is not None]
        if not vals:
            continue
        ax.bar(i, np.mean(vals), color="0.75")
        ax.plot([i] * len(vals), vals, "k.", ms=4)
    ax.set_xticks(range(len(modes)))
    ax.set_xticklabels(modes, fontsize=8)
    ax.set_ylabel("lambda (p.u.)")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return Path(png_path)


def plot_matrix(mat, png_path, title=None):
    """Heat map of a (sensitivity or Jacobian) matrix."""
    mat = np.asarray(mat, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4.2))
    lim = float(np.max(np.abs(mat))) or 1.0
    im = ax.imshow(mat, cmap="RdBu_r", vmin=-lim, vmax=lim)
    fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return Path(png_path)
