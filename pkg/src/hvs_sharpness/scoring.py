"""No-reference sharpness scoring with HVS-like kernels.

Grayscale images are plain 2-D ``float64`` arrays with values in ``[0, 1]``;
feature fields are arrays of the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import symmetric_filter1d
from .kernels import FirKernel

__all__ = [
    "ScoringError",
    "EmptyForegroundError",
    "DegenerateMomentError",
    "ForegroundMask",
    "SharpnessScore",
    "ComboConfig",
    "as_gray_image",
    "to_gray",
    "background_mask",
    "decompose",
    "relu",
    "feature_map",
    "sigma_stat",
    "retention_ratio",
    "select_top",
    "central_moment",
    "score_single",
    "score_combo",
]

BACKGROUND_THRESHOLD = 0.05
SIGMA_PERCENTILE = 95
LUMA = (0.299, 0.587, 0.114)


class ScoringError(ValueError):
    """Base class for images that cannot be scored."""


class EmptyForegroundError(ScoringError):
    def __init__(self, msg="empty foreground: every pixel is below the background threshold"):
        super().__init__(msg)


class DegenerateMomentError(ScoringError):
    def __init__(self, msg="degenerate moment: retained features have zero spread"):
        super().__init__(msg)


@dataclass(frozen=True)
class ForegroundMask:
    mask: np.ndarray
    valid_count: int


@dataclass(frozen=True)
class SharpnessScore:
    value: float
    moment_value: float
    retained: int
    sigma: float


@dataclass(frozen=True)
class ComboConfig:
    """Two kernels with their moment orders and linear combination weights."""

    kernels: tuple[FirKernel, FirKernel]
    moments: tuple[int, int]
    weights: tuple[float, float]

    def __post_init__(self):
        if len(self.kernels) != 2 or len(self.moments) != 2 or len(self.weights) != 2:
            raise ValueError("a combination needs exactly two kernels, moments and weights")
        if not all(math.isfinite(w) for w in self.weights):
            raise ValueError("combination weights must be finite")


def as_gray_image(img, min_size: int = 1) -> np.ndarray:
    """Validate a grayscale raster and return it as ``float64``."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a non-empty 2-D grayscale image, got shape {a.shape}")
    if min(a.shape) < min_size:
        raise ValueError(f"image {a.shape[1]}x{a.shape[0]} is smaller than the "
                         f"{min_size}-tap kernel support")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("grayscale pixels must be finite and within [0, 1]")
    return a


def to_gray(raster) -> np.ndarray:
    """Normalized luma of an 8/16-bit (or float in [0, 1]) raster.

    Accepts ``H x W`` single-channel or ``H x W x C`` with C >= 3 (alpha ignored).
    """
    a = np.asarray(raster)
    if a.size == 0:
        raise ValueError("zero-sized image")
    if a.dtype in (np.uint8, np.uint16):
        full = float(np.iinfo(a.dtype).max)
    elif np.issubdtype(a.dtype, np.integer):
        # e.g. int32 from PIL's "I" mode: infer bit depth from the data
        full = 65535.0 if a.max() > 255 else 255.0
    else:
        full = 1.0
    a = a.astype(np.float64)
    if a.ndim == 3:
        if a.shape[2] == 1:
            a = a[..., 0]
        elif a.shape[2] >= 3:
            a = LUMA[0] * a[..., 0] + LUMA[1] * a[..., 1] + LUMA[2] * a[..., 2]
        else:
            raise ValueError(f"unsupported channel count {a.shape[2]}")
    elif a.ndim != 2:
        raise ValueError(f"expected a 2-D or 3-D raster, got shape {a.shape}")
    return np.clip(a / full, 0.0, 1.0)


def background_mask(img: np.ndarray, threshold: float = BACKGROUND_THRESHOLD) -> ForegroundMask:
    """Keep pixels at or above ``threshold``; darker ones are background."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {threshold!r}")
    mask = np.asarray(img) >= threshold
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise EmptyForegroundError()
    return ForegroundMask(mask=mask, valid_count=count)


def decompose(img: np.ndarray, k: FirKernel) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal (row-wise) and vertical (column-wise) kernel responses."""
    a = np.asarray(img, dtype=np.float64)
    return symmetric_filter1d(a, k.taps, axis=1), symmetric_filter1d(a, k.taps, axis=0)


def relu(f):
    return np.maximum(f, 0.0)


def feature_map(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """l_1/2 combination ``(sqrt(gx) + sqrt(gy))**2`` of rectified responses."""
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.shape != gy.shape:
        raise ValueError(f"feature fields differ in shape: {gx.shape} vs {gy.shape}")
    if (gx < 0).any() or (gy < 0).any():
        raise ValueError("feature_map expects rectified (non-negative) inputs; apply relu first")
    return (np.sqrt(gx) + np.sqrt(gy)) ** 2


def _nearest_rank(values: np.ndarray, percent: int) -> float:
    n = values.size
    rank = (percent * n + 99) // 100  # ceil(percent/100 * n), exact in integers
    rank = min(max(rank, 1), n)
    return float(np.partition(values, rank - 1)[rank - 1])


def sigma_stat(gx: np.ndarray, gy: np.ndarray, mask: ForegroundMask) -> float:
    """95th nearest-rank percentile of the pooled foreground responses."""
    m = mask.mask
    pooled = np.concatenate([np.asarray(gx)[m], np.asarray(gy)[m]])
    if pooled.size == 0:
        raise EmptyForegroundError()
    return _nearest_rank(pooled, SIGMA_PERCENTILE)


def retention_ratio(sigma: float) -> float:
    """Fraction of feature pixels retained; decreasing in ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return 0.25 * (1.0 - math.tanh(60.0 * (sigma - 0.095))) + 0.09


def select_top(m: np.ndarray, mask: ForegroundMask, p: float) -> np.ndarray:
    """The ``max(1, floor(p * valid_count))`` largest foreground values, descending.

    Ties are resolved by row-major pixel index.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"retention ratio must lie in (0, 1], got {p!r}")
    vals = np.asarray(m)[mask.mask]  # row-major order
    if vals.size == 0:
        raise EmptyForegroundError()
    k = max(1, math.floor(p * mask.valid_count))
    if k < vals.size:
        part = np.argpartition(-vals, k - 1)[:k]
        cand = np.sort(part)
        order = cand[np.argsort(-vals[cand], kind="stable")]
    else:
        order = np.argsort(-vals, kind="stable")
    return vals[order]


def central_moment(values, m: int) -> float:
    """Population ``m``-th central moment (``m`` even, >= 2)."""
    if m < 2 or m % 2:
        raise ValueError(f"moment order must be an even integer >= 2, got {m}")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("central_moment of an empty vector")
    dev = v - v.mean()
    return float(np.mean(dev**m))


def score_single(img, k: FirKernel, m: int, *, threshold: float = BACKGROUND_THRESHOLD
                 ) -> SharpnessScore:
    """Sharpness score ``C = -ln(mu_m)`` of one image under one kernel."""
    img = as_gray_image(img, min_size=len(k))
    mask = background_mask(img, threshold)
    gx, gy = decompose(img, k)
    gx = relu(gx)
    gy = relu(gy)
    sigma = sigma_stat(gx, gy, mask)
    p = retention_ratio(sigma)
    fmap = feature_map(gx, gy)
    top = select_top(fmap, mask, p)
    mu = central_moment(top, m)
    if not mu > 0:
        raise DegenerateMomentError()
    return SharpnessScore(value=-math.log(mu), moment_value=mu, retained=int(top.size),
                          sigma=sigma)


def score_combo(img, cfg: ComboConfig, *, threshold: float = BACKGROUND_THRESHOLD) -> float:
    """Weighted sum ``w1*C1 + w2*C2`` of the two single-kernel scores."""
    c1 = score_single(img, cfg.kernels[0], cfg.moments[0], threshold=threshold).value
    c2 = score_single(img, cfg.kernels[1], cfg.moments[1], threshold=threshold).value
    return cfg.weights[0] * c1 + cfg.weights[1] * c2
