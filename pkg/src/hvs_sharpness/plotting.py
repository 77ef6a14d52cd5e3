"""Figures written next to CLI outputs (Agg backend, no display needed)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .kernels import FirKernel, HvsKernelSpec, gg_pdf, gg_spectrum, kernel_response  # noqa: E402
from .statistics import LogisticParams, logistic_map  # noqa: E402

__all__ = ["plot_kernel", "plot_scatter", "plot_scalability", "plot_timing"]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_kernel(spec: HvsKernelSpec, kernel: FirKernel, path) -> Path:
    """GG density, its spectrum, the kernel taps and the kernel response."""
    w = np.linspace(0.0, math.pi, 512)
    fig, ax = plt.subplots(2, 2, figsize=(9, 6.5))

    x = np.linspace(-4 * spec.gg.alpha, 4 * spec.gg.alpha, 401)
    ax[0, 0].plot(x, gg_pdf(x, spec.gg))
    ax[0, 0].set_title(f"GG density (alpha={spec.gg.alpha:g}, beta={spec.gg.beta:g})")

    ax[0, 1].plot(w / math.pi, gg_spectrum(spec.gg, w))
    ax[0, 1].set_title("GG spectrum")
    ax[0, 1].set_xlabel("frequency / pi")

    n = np.arange(len(kernel)) - kernel.radius
    ax[1, 0].stem(n, kernel.taps, basefmt=" ")
    ax[1, 0].set_title(f"kernel taps (L={len(kernel)})")

    ax[1, 1].plot(w / math.pi, kernel_response(kernel, w))
    ax[1, 1].axvline(spec.cutoff / math.pi, ls="--", c="gray", lw=1)
    ax[1, 1].set_title("kernel magnitude response")
    ax[1, 1].set_xlabel("frequency / pi")
    fig.tight_layout()
    return _save(fig, path)


def plot_scatter(objective, subjective, params: dict | LogisticParams, path,
                 title: str = "") -> Path:
    """Objective vs subjective scores with the fitted logistic curve."""
    x = np.asarray(objective, dtype=np.float64)
    y = np.asarray(subjective, dtype=np.float64)
    if isinstance(params, dict):
        params = LogisticParams(**params)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.scatter(x, y, s=12, alpha=0.7)
    xs = np.linspace(x.min(), x.max(), 400)
    ax.plot(xs, logistic_map(xs, params), c="C3", lw=1.5)
    ax.set_xlabel("objective score")
    ax.set_ylabel("subjective score")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_scalability(rows: list[dict], path) -> Path:
    """Box plot of subset PLCC per sampling fraction."""
    fracs = sorted({r["fraction"] for r in rows})
    data = [[r["plcc"] for r in rows if r["fraction"] == f and r["plcc"] is not None]
            for f in fracs]
    keep = [(f, d) for f, d in zip(fracs, data) if d]
    fig, ax = plt.subplots(figsize=(7, 4))
    if keep:
        ax.boxplot([d for _, d in keep])
        ax.set_xticks(range(1, len(keep) + 1), [f"{100 * f:g}%" for f, _ in keep])
    ax.set_xlabel("dataset fraction")
    ax.set_ylabel("PLCC")
    return _save(fig, path)


def plot_timing(pixels, seconds, path) -> Path:
    """Log-log run time against pixel count with a fitted slope."""
    px = np.asarray(pixels, dtype=np.float64)
    t = np.asarray(seconds, dtype=np.float64)
    slope, icpt = np.polyfit(np.log(px), np.log(t), 1)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(px, t, "o-", label="measured")
    ax.loglog(px, np.exp(icpt) * px**slope, "--", label=f"slope {slope:.2f}")
    ax.set_xlabel("pixels")
    ax.set_ylabel("seconds")
    ax.legend()
    return _save(fig, path)
