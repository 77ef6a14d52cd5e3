"""Synthesis of band-pass FIR kernels that mimic visual sensitivity.

The natural-image amplitude spectrum is modelled by the Fourier transform of a
generalized Gaussian (GG) density.  The kernel response is fitted to the
inverse of that spectrum with an even polynomial in the frequency, and each
polynomial term is realized as a lowpass even-order derivative FIR filter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lstsq, null_space
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

__all__ = [
    "GGParams",
    "HvsKernelSpec",
    "FirKernel",
    "PolyCoeffs",
    "KernelDesignError",
    "gg_scale",
    "gg_pdf",
    "gg_spectrum",
    "target_response",
    "fit_polynomial_coeffs",
    "design_derivative_kernel",
    "derivative_tolerance_ratios",
    "assemble_hvs_kernel",
    "synthesize",
    "kernel_response",
    "save_kernel",
    "load_kernel",
]

# Frequency grid used for all least-squares designs.
DESIGN_GRID = 1024
# Dense grid for locating the response maximum before local refinement.
RESPONSE_GRID = 8193

PASSBAND_EDGE = 0.8  # fraction of the cutoff checked against the ideal derivative
STOPBAND_EDGE = 1.3  # fraction of the cutoff where the stopband begins
PASSBAND_TOL = 0.02  # relative, floored at 1e-3 absolute scale
STOPBAND_TOL = 0.05  # relative to cutoff ** order
LAWSON_ITERS = 3


class KernelDesignError(ValueError):
    """Raised when a kernel cannot be designed from the given recipe."""


@dataclass(frozen=True)
class GGParams:
    """Scale ``alpha`` and shape ``beta`` of a generalized Gaussian."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True)
class HvsKernelSpec:
    gg: GGParams
    cutoff: float = 0.6 * math.pi
    terms: int = 3
    tap_length: int = 25
    moment: int = 12

    def __post_init__(self):
        if not 0 < self.cutoff < math.pi:
            raise ValueError(f"cutoff must lie in (0, pi), got {self.cutoff!r}")
        if self.terms < 1:
            raise ValueError("terms must be a positive integer")
        if self.tap_length % 2 != 1 or self.tap_length < 2 * self.terms + 1:
            raise ValueError(
                f"tap_length must be odd and >= 2*terms+1 = {2 * self.terms + 1}, "
                f"got {self.tap_length}"
            )
        if self.moment < 2 or self.moment % 2:
            raise ValueError(f"moment must be an even integer >= 2, got {self.moment}")


@dataclass(frozen=True)
class FirKernel:
    """Symmetric FIR taps indexed ``-(L-1)/2 .. (L-1)/2``.

    ``norm_gain`` is the divisor applied to reach unit peak response (1.0 for
    unnormalized kernels).
    """

    taps: np.ndarray
    norm_gain: float = 1.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size % 2 != 1:
            raise ValueError("taps must be a 1-D vector of odd length")
        if not np.all(np.isfinite(taps)):
            raise ValueError("taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def radius(self) -> int:
        return self.taps.size // 2

    def __len__(self) -> int:
        return self.taps.size

    def __eq__(self, other):
        if not isinstance(other, FirKernel):
            return NotImplemented
        return self.norm_gain == other.norm_gain and np.array_equal(self.taps, other.taps)

    __hash__ = None


@dataclass(frozen=True)
class PolyCoeffs:
    """Coefficients ``c_1..c_N`` of the model ``sum_n (-1)^n c_n w^(2n)``."""

    c: np.ndarray
    residual_rms: float = 0.0
    relative_rms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=np.float64))

    def __len__(self) -> int:
        return self.c.size


# ---------------------------------------------------------------------------
# Generalized Gaussian model
# ---------------------------------------------------------------------------

def gg_scale(p: GGParams) -> float:
    """Return A(beta, alpha) such that the density has standard deviation alpha."""
    return math.sqrt(p.alpha**2 * math.exp(gammaln(1.0 / p.beta) - gammaln(3.0 / p.beta)))


def gg_pdf(x, p: GGParams):
    """Generalized Gaussian density; scalar in, scalar out, or elementwise on arrays."""
    xa = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(xa)):
        raise ValueError("gg_pdf requires finite x")
    a = gg_scale(p)
    norm = 2.0 * math.exp(gammaln(1.0 + 1.0 / p.beta)) * a
    out = np.exp(-np.abs(xa / a) ** p.beta) / norm
    return float(out) if out.ndim == 0 else out


def _validate_grid(omega) -> np.ndarray:
    w = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    if w.size == 0:
        raise ValueError("frequency grid is empty")
    if w.ndim != 1 or not np.all(np.isfinite(w)):
        raise ValueError("frequency grid must be a finite 1-D vector")
    if w.min() < 0 or w.max() > math.pi + 1e-12:
        raise ValueError("frequency grid must lie within [0, pi]")
    if np.any(np.diff(w) < 0):
        raise ValueError("frequency grid must be sorted ascending")
    return w


def _gg_quadrature(p: GGParams, order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    # Composite Gauss-Legendre on [0, X]: geometric panels resolve the cusp at
    # x = 0 when beta < 1, half-sample panels resolve cos(w x) for w <= pi.
    a = gg_scale(p)
    x_max = a * 40.0 ** (1.0 / p.beta)  # exp(-40) tail
    inner = a * np.geomspace(1e-10, 1.0, 41)
    if x_max > a:
        outer = np.linspace(a, x_max, int(math.ceil((x_max - a) / 0.5)) + 1)[1:]
    else:
        outer = np.empty(0)
    edges = np.concatenate([[0.0], inner, outer])
    t, wt = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * t + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * wt).ravel()
    return nodes, weights


def gg_spectrum(p: GGParams, omega_grid) -> np.ndarray:
    """Amplitude spectrum of the GG density, unit at DC.

    The density is even, so the transform is ``2 * int_0^inf f(x) cos(w x) dx``.
    """
    w = _validate_grid(omega_grid)
    x, wt = _gg_quadrature(p)
    f = gg_pdf(x, p) * wt
    return 2.0 * (np.cos(np.outer(w, x)) @ f)


def target_response(p: GGParams, cutoff: float, omega_grid) -> np.ndarray:
    """Inverse GG spectrum inside the passband, zero beyond ``cutoff``."""
    if not 0 < cutoff < math.pi:
        raise ValueError(f"cutoff must lie in (0, pi), got {cutoff!r}")
    w = _validate_grid(omega_grid)
    out = np.zeros_like(w)
    band = w <= cutoff
    if band.any():
        spec = gg_spectrum(p, w[band])
        if spec.min() < 1e-12:
            raise KernelDesignError(
                "GG spectrum falls below 1e-12 inside the passband; "
                "choose a smaller cutoff"
            )
        out[band] = 1.0 / spec
    return out


def _even_poly_basis(omega: np.ndarray, terms: int) -> np.ndarray:
    n = np.arange(1, terms + 1)
    return (-1.0) ** n * omega[:, None] ** (2 * n)


def fit_polynomial_coeffs(omega, target, terms: int) -> PolyCoeffs:
    """Least-squares fit of ``sum_n (-1)^n c_n w^(2n)`` to sampled ``target``.

    The model is linear in ``c`` so ordinary least squares gives the exact
    minimizer.  Requires at least ``4 * terms`` samples.
    """
    w = np.asarray(omega, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if w.shape != t.shape:
        raise ValueError("omega and target must have the same length")
    if w.size < 4 * terms:
        raise ValueError(f"need at least {4 * terms} samples for {terms} terms, got {w.size}")
    basis = _even_poly_basis(w, terms)
    # Column scaling keeps high powers of w from dominating the conditioning.
    scale = np.abs(basis).max(axis=0)
    scale[scale == 0] = 1.0
    c_scaled, _, rank, _ = lstsq(basis / scale, t, lapack_driver="gelsd")
    if rank < terms:
        raise KernelDesignError(
            f"polynomial design matrix is rank deficient ({rank} < {terms}); "
            "the grid needs more distinct nonzero frequencies"
        )
    c = c_scaled / scale
    resid = basis @ c - t
    rms = float(np.sqrt(np.mean(resid**2)))
    tnorm = float(np.linalg.norm(t))
    rel = float(np.linalg.norm(resid) / tnorm) if tnorm > 0 else 0.0
    return PolyCoeffs(c=c, residual_rms=rms, relative_rms=rel)


# ---------------------------------------------------------------------------
# Lowpass derivative filters
# ---------------------------------------------------------------------------

def _cosine_basis(omega: np.ndarray, radius: int) -> np.ndarray:
    # Response of half-taps q = [h0, h1, ..., hR]: h0 + 2 sum_k hk cos(k w).
    b = 2.0 * np.cos(np.outer(omega, np.arange(radius + 1)))
    b[:, 0] = 1.0
    return b


def _expand_half(q: np.ndarray) -> np.ndarray:
    return np.concatenate([q[:0:-1], q])


def derivative_tolerance_ratios(taps, order: int, cutoff: float) -> tuple[float, float]:
    """Worst passband and stopband error as a fraction of the allowed tolerance.

    Values <= 1 mean the filter meets the lowpass differentiator tolerances.
    """
    n = order // 2
    w = np.linspace(0.0, math.pi, 4 * DESIGN_GRID + 1)
    resp = _symmetric_response(np.asarray(taps, dtype=np.float64), w)
    ideal = (-1.0) ** n * w ** (2 * n)
    pb = w <= PASSBAND_EDGE * cutoff
    sb = w >= min(STOPBAND_EDGE * cutoff, math.pi)
    pass_ratio = float(
        np.max(np.abs(resp[pb] - ideal[pb]) / (PASSBAND_TOL * np.maximum(w[pb] ** (2 * n), 1e-3)))
    )
    stop_ratio = 0.0
    if sb.any():
        stop_ratio = float(np.max(np.abs(resp[sb])) / (STOPBAND_TOL * cutoff ** (2 * n)))
    return pass_ratio, stop_ratio


def design_derivative_kernel(order: int, cutoff: float, tap_length: int) -> FirKernel:
    """Lowpass FIR approximation of the ``order``-th derivative (order even).

    The taps satisfy the moment conditions of a consistent ``order``-th
    derivative stencil (response ``(-1)^n w^(2n) + O(w^(2n+2))`` at DC).  Any
    remaining freedom minimizes the tolerance-normalized error over the passband
    ``[0, 0.8 cutoff]`` and stopband ``[1.3 cutoff, pi]`` with a few Lawson
    reweighting steps toward the minimax solution.

    When the moment conditions alone determine the taps (``tap_length ==
    order + 1``) the classical central-difference stencil is returned as is.
    Otherwise a :class:`KernelDesignError` is raised if the tolerances are
    violated.
    """
    if order < 2 or order % 2:
        raise ValueError(f"order must be an even integer >= 2, got {order}")
    if tap_length % 2 != 1 or tap_length < order + 1:
        raise ValueError(f"tap_length must be odd and >= {order + 1}, got {tap_length}")
    if not 0 < cutoff <= math.pi:
        raise ValueError(f"cutoff must lie in (0, pi], got {cutoff!r}")

    n = order // 2
    radius = tap_length // 2
    k = np.arange(radius + 1, dtype=np.float64)
    # Full-kernel moments sum_k h_k k^(2j): zero for j < n, (2n)! for j = n.
    cons = np.zeros((n + 1, radius + 1))
    cons[0, 0] = 1.0
    for j in range(n + 1):
        cons[j, 1:] = 2.0 * k[1:] ** (2 * j)
    rhs = np.zeros(n + 1)
    rhs[n] = math.factorial(2 * n)

    if radius + 1 == n + 1:
        q = np.linalg.solve(cons, rhs)
        q[0] = -2.0 * q[1:].sum()
        return FirKernel(_expand_half(q))

    w = np.linspace(0.0, math.pi, DESIGN_GRID)
    wp = w[w <= PASSBAND_EDGE * cutoff]
    ws = w[w >= min(STOPBAND_EDGE * cutoff, math.pi)]
    grid = np.concatenate([wp, ws])
    ideal = np.concatenate([(-1.0) ** n * wp ** (2 * n), np.zeros(ws.size)])
    base_w = np.concatenate([
        1.0 / (PASSBAND_TOL * np.maximum(wp ** (2 * n), 1e-3)),
        np.full(ws.size, 1.0 / (STOPBAND_TOL * cutoff ** (2 * n))),
    ])
    basis = _cosine_basis(grid, radius)

    q0 = lstsq(cons, rhs)[0]
    free = null_space(cons)
    lawson = np.ones_like(base_w)
    for _ in range(LAWSON_ITERS + 1):
        wt = base_w * np.sqrt(lawson)
        y = lstsq((basis @ free) * wt[:, None], (ideal - basis @ q0) * wt)[0]
        q = q0 + free @ y
        err = np.abs(basis @ q - ideal) * base_w
        lawson = lawson * err
        total = lawson.sum()
        if total == 0:
            break
        lawson /= total
    q[0] = -2.0 * q[1:].sum()
    taps = _expand_half(q)

    pass_ratio, stop_ratio = derivative_tolerance_ratios(taps, order, cutoff)
    if pass_ratio > 1.0:
        raise KernelDesignError(
            f"order-{order} filter with {tap_length} taps misses the passband "
            f"tolerance ({PASSBAND_TOL:.0%} relative error on [0, {PASSBAND_EDGE} cutoff]) "
            f"by a factor {pass_ratio:.2f}; increase tap_length or lower the cutoff"
        )
    if stop_ratio > 1.0:
        raise KernelDesignError(
            f"order-{order} filter with {tap_length} taps misses the stopband "
            f"tolerance ({STOPBAND_TOL:.0%} of cutoff^{order} on [{STOPBAND_EDGE} cutoff, pi]) "
            f"by a factor {stop_ratio:.2f}; increase tap_length"
        )
    return FirKernel(taps)


# ---------------------------------------------------------------------------
# Superposition and normalization
# ---------------------------------------------------------------------------

def _symmetric_response(taps: np.ndarray, omega: np.ndarray) -> np.ndarray:
    r = taps.size // 2
    return _cosine_basis(omega, r) @ taps[r:]


def _peak_response(taps: np.ndarray) -> float:
    w = np.linspace(0.0, math.pi, RESPONSE_GRID)
    mag = np.abs(_symmetric_response(taps, w))
    i = int(np.argmax(mag))
    lo, hi = w[max(i - 1, 0)], w[min(i + 1, w.size - 1)]
    res = minimize_scalar(
        lambda x: -abs(float(_symmetric_response(taps, np.array([x]))[0])),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(mag[i]), -float(res.fun))


def _center_pad(taps: np.ndarray, length: int) -> np.ndarray:
    extra = length - taps.size
    if extra < 0 or extra % 2:
        raise KernelDesignError(f"cannot center-pad {taps.size} taps to length {length}")
    return np.pad(taps, extra // 2)


def assemble_hvs_kernel(coeffs: PolyCoeffs, derivative_kernels) -> FirKernel:
    """Superpose ``c_n * d_2n`` and normalize to unit peak response."""
    c = np.asarray(coeffs.c if isinstance(coeffs, PolyCoeffs) else coeffs, dtype=np.float64)
    kernels = list(derivative_kernels)
    if len(kernels) != c.size:
        raise ValueError(f"{c.size} coefficients but {len(kernels)} derivative kernels")
    length = max(len(k) for k in kernels)
    taps = np.zeros(length)
    for cn, k in zip(c, kernels):
        taps += cn * _center_pad(k.taps, length)
    r = length // 2
    # Exact symmetry and DC null regardless of rounding in the sum.
    half = 0.5 * (taps[r:] + taps[r::-1])
    half[0] = -2.0 * half[1:].sum()
    taps = _expand_half(half)
    if not np.any(taps):
        raise KernelDesignError("all-zero kernel: normalization is undefined")
    gain = _peak_response(taps)
    if gain <= 0:
        raise KernelDesignError("all-zero kernel: normalization is undefined")
    return FirKernel(taps / gain, norm_gain=gain)


def kernel_response(k: FirKernel, omega_grid) -> np.ndarray:
    """Magnitude of the DTFT of ``k`` on ``omega_grid``."""
    w = _validate_grid(omega_grid)
    idx = np.arange(-k.radius, k.radius + 1)
    return np.abs(np.exp(-1j * np.outer(w, idx)) @ k.taps)


@dataclass(frozen=True)
class SynthesisResult:
    kernel: FirKernel
    coeffs: PolyCoeffs
    derivatives: list = field(default_factory=list)


def synthesize(spec: HvsKernelSpec, *, return_details: bool = False):
    """Build the HVS-like kernel for ``spec``.

    With ``return_details=True`` a :class:`SynthesisResult` carrying the fitted
    coefficients and the individual derivative filters is returned instead.
    """
    w = np.linspace(0.0, math.pi, DESIGN_GRID)
    band = (w > 0) & (w <= spec.cutoff)
    target = target_response(spec.gg, spec.cutoff, w[band])
    coeffs = fit_polynomial_coeffs(w[band], target, spec.terms)
    derivs = [
        design_derivative_kernel(2 * n, spec.cutoff, spec.tap_length)
        for n in range(1, spec.terms + 1)
    ]
    kernel = assemble_hvs_kernel(coeffs, derivs)
    if return_details:
        return SynthesisResult(kernel=kernel, coeffs=coeffs, derivatives=derivs)
    return kernel


# ---------------------------------------------------------------------------
# Kernel files
# ---------------------------------------------------------------------------

def save_kernel(path, spec: HvsKernelSpec, kernel: FirKernel, preset_note: str = "",
                orientation: int = -1) -> dict:
    doc = {
        "alpha": spec.gg.alpha,
        "beta": spec.gg.beta,
        "cutoff_over_pi": spec.cutoff / math.pi,
        "terms": spec.terms,
        "tap_length": spec.tap_length,
        "moment": spec.moment,
        "taps": [float(t) for t in kernel.taps],
        "norm_gain": float(kernel.norm_gain),
        "preset_note": preset_note,
        "orientation": int(orientation),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def load_kernel(path) -> tuple[HvsKernelSpec, FirKernel, dict]:
    """Read a kernel file; returns the recipe, the stored taps and the raw document."""
    doc = json.loads(Path(path).read_text())
    missing = {"alpha", "beta", "cutoff_over_pi", "terms", "tap_length", "moment",
               "taps", "norm_gain"} - doc.keys()
    if missing:
        raise ValueError(f"{path}: kernel file lacks {sorted(missing)}")
    spec = HvsKernelSpec(
        gg=GGParams(float(doc["alpha"]), float(doc["beta"])),
        cutoff=float(doc["cutoff_over_pi"]) * math.pi,
        terms=int(doc["terms"]),
        tap_length=int(doc["tap_length"]),
        moment=int(doc["moment"]),
    )
    taps = np.asarray(doc["taps"], dtype=np.float64)
    if taps.size != spec.tap_length:
        raise ValueError(f"{path}: {taps.size} taps but tap_length is {spec.tap_length}")
    return spec, FirKernel(taps, norm_gain=float(doc["norm_gain"])), doc
