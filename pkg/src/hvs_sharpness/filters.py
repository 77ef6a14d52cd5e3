"""Separable filtering with symmetric kernels and mirror boundaries."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = ["symmetric_filter1d", "gaussian_taps"]


def symmetric_filter1d(image: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Convolve ``image`` along ``axis`` with symmetric odd-length ``taps``.

    Boundaries use half-sample mirror padding (``c b a | a b c``).  For
    symmetric taps scipy accumulates ``t0*x[i] + sum_k tk*(x[i-k] + x[i+k])``,
    so the result is bit-identical under reversal of the axis and under
    transposition; the test-suite pins that behaviour.
    """
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.size % 2 != 1:
        raise ValueError("taps must be a 1-D vector of odd length")
    if not np.array_equal(taps, taps[::-1]):
        raise ValueError("taps must be symmetric")
    return ndimage.correlate1d(np.asarray(image, dtype=np.float64), taps, axis=axis,
                               mode="reflect")


def gaussian_taps(sigma: float) -> np.ndarray:
    """Sampled Gaussian of radius ``ceil(4 sigma)``, normalized to unit sum."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    r = int(np.ceil(4.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    # exact symmetry after normalization
    return 0.5 * (g + g[::-1])
