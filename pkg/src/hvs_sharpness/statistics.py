"""Agreement between objective scores and subjective ratings.

Correlations (PLCC/SRCC/KRCC/RMSE), the five-parameter logistic mapping used
before computing PLCC and RMSE, the seven-parameter fit that finds weights for
a two-kernel score, and pairwise significance measures (AUC different/similar,
AUC better/worse, correct-classification rate C0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st
from scipy.optimize import least_squares, minimize
from scipy.special import expit

__all__ = [
    "ScorePairs",
    "LogisticParams",
    "ComboFit",
    "PairLabels",
    "FitError",
    "plcc",
    "srcc",
    "krcc",
    "rmse",
    "logistic_map",
    "affine_fit",
    "fit_logistic",
    "fit_combo",
    "pair_significance",
    "auc_ds",
    "auc_bw",
    "c0",
]

NM_MAXITER = 400
NM_XATOL = 1e-6
LS_MAX_NFEV = 300


class FitError(RuntimeError):
    """No start produced a finite fit; ``best`` holds whatever came closest."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class ScorePairs:
    objective: np.ndarray
    subjective: np.ndarray
    subjective_std: np.ndarray | None = None
    groups: tuple | None = None

    def __post_init__(self):
        x = np.asarray(self.objective, dtype=np.float64)
        y = np.asarray(self.subjective, dtype=np.float64)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("objective and subjective must be 1-D and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "objective", x)
        object.__setattr__(self, "subjective", y)
        if self.subjective_std is not None:
            s = np.asarray(self.subjective_std, dtype=np.float64)
            if s.shape != y.shape:
                raise ValueError("subjective_std must match subjective in length")
            object.__setattr__(self, "subjective_std", s)
        if self.groups is not None and len(self.groups) != y.size:
            raise ValueError("groups must match subjective in length")

    def __len__(self):
        return self.subjective.size


@dataclass(frozen=True)
class LogisticParams:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4, self.k5])

    @classmethod
    def from_array(cls, a) -> LogisticParams:
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class ComboFit:
    params: LogisticParams
    weights: tuple[float, float]
    final_rmse: float


# ---------------------------------------------------------------------------
# Correlations
# ---------------------------------------------------------------------------

def _pair(x, y, min_len=3):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    return x, y


def plcc(x, y) -> float:
    """Pearson linear correlation."""
    x, y = _pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined for a constant vector")
    return float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))


def srcc(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    x, y = _pair(x, y)
    return plcc(_st.rankdata(x), _st.rankdata(y))


def krcc(x, y) -> float:
    """Kendall tau-b."""
    x, y = _pair(x, y)
    tau = _st.kendalltau(x, y, variant="b").statistic
    if not np.isfinite(tau):
        raise ValueError("Kendall tau undefined: every pair is tied")
    return float(tau)


def rmse(yhat, y) -> float:
    yhat, y = _pair(yhat, y, min_len=1)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


# ---------------------------------------------------------------------------
# Logistic mapping
# ---------------------------------------------------------------------------

def _logistic(x, k):
    k1, k2, k3, k4, k5 = k
    with np.errstate(invalid="ignore", over="ignore"):
        z = k2 * (x - k3)
    z = np.where(np.isnan(z), 0.0, z)  # inf * 0 at the midpoint of a step
    return k1 * (0.5 + expit(-z)) + k4 * x + k5


def _logistic_jac(x, k):
    """Partial derivatives of :func:`_logistic` w.r.t. ``k`` (columns) and ``x``."""
    k1, k2, k3, k4, _ = k
    with np.errstate(invalid="ignore", over="ignore"):
        z = k2 * (x - k3)
    z = np.where(np.isnan(z), 0.0, z)
    s = expit(-z)
    ds = s * (1.0 - s)
    jk = np.column_stack([0.5 + s, -k1 * ds * (x - k3), k1 * ds * k2, x, np.ones_like(x)])
    jx = -k1 * ds * k2 + k4
    return jk, jx


def logistic_map(x, k: LogisticParams) -> np.ndarray:
    """``k1 (1/2 + 1/(1 + exp(k2 (x - k3)))) + k4 x + k5``, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    arr = k.as_array() if isinstance(k, LogisticParams) else np.asarray(k, dtype=np.float64)
    return _logistic(x, arr)


def affine_fit(x, y) -> tuple[LogisticParams, float]:
    """Closed-form least squares with the sigmoid switched off (``k1 = 0``)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a = np.column_stack([x, np.ones_like(x)])
    (k4, k5), *_ = np.linalg.lstsq(a, y, rcond=None)
    p = LogisticParams(0.0, 1.0, float(np.mean(x)), float(k4), float(k5))
    return p, rmse(logistic_map(x, p), y)


def _standardize(v):
    m = float(np.mean(v))
    s = float(np.std(v))
    return m, (s if s > 0 else 1.0)


def _refine(residuals, start, jac="2-point"):
    """Simplex descent on the squared error, then a Levenberg-Marquardt-style polish."""
    def sse(p):
        r = residuals(p)
        v = float(r @ r)
        return v if np.isfinite(v) else np.inf

    res = minimize(sse, start, method="Nelder-Mead",
                   options={"maxiter": NM_MAXITER, "xatol": NM_XATOL, "fatol": 1e-14,
                            "adaptive": True})
    best_p, best_f = np.asarray(res.x), float(res.fun)
    if np.isfinite(best_f):
        try:
            with np.errstate(all="ignore"):  # trust-region steps on exact fits divide by ~0
                ls = least_squares(residuals, best_p, jac=jac, method="trf", x_scale="jac",
                                   xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=LS_MAX_NFEV)
            f = float(ls.fun @ ls.fun)
            if np.isfinite(f) and f <= best_f:
                best_p, best_f = ls.x, f
        except (ValueError, np.linalg.LinAlgError):
            pass
    return best_p, best_f


def _fit_normalized(xn, yn):
    """Fit the logistic map on standardized data; returns (params, sse) best first."""
    def resid(p):
        return _logistic(xn, p) - yn

    def jac(p):
        return _logistic_jac(xn, p)[0]

    aff, _ = affine_fit(xn, yn)
    starts = [aff.as_array()]
    rng_y = float(np.ptp(yn))
    for sign in (1.0, -1.0):
        starts.append(np.array([rng_y, sign * 4.0, 0.0, 0.0, float(yn.min())]))

    r0 = resid(aff.as_array())
    cands = [(aff.as_array(), float(r0 @ r0))]
    for s in starts:
        cands.append(_refine(resid, np.asarray(s, dtype=np.float64), jac))
    cands.sort(key=lambda c: c[1])
    best = cands[0]
    # Perturbed restart from the incumbent escapes shallow simplex stalls.
    pert = best[0] * np.array([1.1, 0.9, 1.0, 1.1, 1.0]) + np.array([0.05, 0.05, 0.05, 0.0, 0.0])
    cands.append(_refine(resid, pert, jac))
    cands.sort(key=lambda c: c[1])
    return cands


def fit_logistic(x, y) -> tuple[LogisticParams, float]:
    """Least-squares fit of :func:`logistic_map` to ``(x, y)``.

    Deterministic multi-start search; never returns a fit worse than
    :func:`affine_fit`.  Needs at least six points.
    """
    x, y = _pair(x, y, min_len=6)
    mx, sx = _standardize(x)
    my, sy = _standardize(y)
    cands = _fit_normalized((x - mx) / sx, (y - my) / sy)
    p, f = cands[0]
    if not np.isfinite(f):
        raise FitError("logistic fit failed from every start", best=p)
    k1, k2, k3, k4, k5 = p
    params = LogisticParams(
        k1=sy * k1,
        k2=k2 / sx,
        k3=mx + sx * k3,
        k4=sy * k4 / sx,
        k5=sy * k5 + my - sy * k4 * mx / sx,
    )
    err = rmse(logistic_map(x, params), y)
    aff, aff_err = affine_fit(x, y)
    if aff_err < err:
        return aff, aff_err
    return params, err


def fit_combo(score_matrix, y) -> ComboFit:
    """Joint fit of the logistic map and two column weights, ``Q(M w) ~ y``.

    Only the fit quality is meaningful: rescaling ``w`` while compensating
    ``k2``, ``k3`` and ``k4`` leaves the prediction unchanged.
    """
    m = np.asarray(score_matrix, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if m.ndim != 2 or m.shape[1] != 2:
        raise ValueError(f"score matrix must be n x 2, got {m.shape}")
    if m.shape[0] != y.size:
        raise ValueError("score matrix and subjective scores differ in length")
    if y.size < 8:
        raise ValueError(f"need at least 8 samples, got {y.size}")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")

    col_mean = m.mean(axis=0)
    col_std = m.std(axis=0)
    col_std[col_std == 0] = 1.0
    mn = (m - col_mean) / col_std
    my, sy = _standardize(y)
    yn = (y - my) / sy

    def resid(p):
        return _logistic(mn @ p[5:], p[:5]) - yn

    def jac(p):
        jk, jx = _logistic_jac(mn @ p[5:], p[:5])
        return np.hstack([jk, jx[:, None] * mn])

    def sse(p):
        r = resid(p)
        return float(r @ r)

    # Single-column fits (w = e1, e2) and the even blend seed the joint search;
    # keeping them as candidates means the joint fit is never worse than either.
    cands = []
    for w in (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.5, 0.5])):
        xw = mn @ w
        xm, xs = _standardize(xw)
        kn = _fit_normalized((xw - xm) / xs, yn)[0][0]
        k = np.array([kn[0], kn[1] / xs, xm + xs * kn[2], kn[3] / xs, kn[4] - kn[3] * xm / xs])
        p0 = np.concatenate([k, w])
        cands.append((p0, sse(p0)))
        cands.append(_refine(resid, p0, jac))
    cands.sort(key=lambda c: c[1])
    p, f = cands[0]
    if not np.isfinite(f):
        raise FitError("combination fit failed from every start", best=p)

    wn = p[5:]
    w = wn / col_std
    offset = float(wn @ (col_mean / col_std))
    k1, k2, k3, k4, k5 = p[:5]
    params = LogisticParams(k1=sy * k1, k2=k2, k3=k3 + offset, k4=sy * k4,
                            k5=sy * (k5 - k4 * offset) + my)
    yhat = logistic_map(m @ w, params)
    return ComboFit(params=params, weights=(float(w[0]), float(w[1])),
                    final_rmse=rmse(yhat, y))


# ---------------------------------------------------------------------------
# Pairwise significance measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairLabels:
    """Labels for unordered pairs ``(i[p], j[p])``.

    ``better[p]`` is +1 when item ``i`` is subjectively better, -1 when ``j``
    is, and 0 for pairs that are not significantly different.
    """

    i: np.ndarray
    j: np.ndarray
    significant: np.ndarray
    better: np.ndarray

    def __len__(self):
        return self.i.size

    def reversed(self) -> PairLabels:
        return PairLabels(self.j, self.i, self.significant, -self.better)


def pair_significance(pairs: ScorePairs, threshold: float = 0.0, z: float = 1.96,
                      within_groups: bool = False) -> PairLabels:
    """Label every unordered pair as significantly different or similar.

    With per-item standard deviations a pair is significant when
    ``|Yi - Yj| > z * sqrt(si**2 + sj**2)``; without them when
    ``|Yi - Yj| > threshold``.  ``within_groups`` restricts pairs to items
    sharing a group label.
    """
    y = pairs.subjective
    n = y.size
    if n < 2:
        raise ValueError("need at least two items to form pairs")
    i, j = np.triu_indices(n, k=1)
    if within_groups:
        if pairs.groups is None:
            raise ValueError("within_groups requires group labels")
        g = np.asarray(pairs.groups, dtype=object)
        keep = g[i] == g[j]
        i, j = i[keep], j[keep]
    diff = y[i] - y[j]
    if pairs.subjective_std is not None:
        s = pairs.subjective_std
        bound = z * np.sqrt(s[i] ** 2 + s[j] ** 2)
    else:
        bound = np.full(diff.shape, float(threshold))
    sig = np.abs(diff) > bound
    better = np.where(sig, np.sign(diff), 0).astype(np.int8)
    return PairLabels(i=i, j=j, significant=sig, better=better)


def _mann_whitney_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs both a positive and a negative class")
    ranks = _st.rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def auc_ds(objective, labels: PairLabels) -> float:
    """ROC area of ``|dC|`` separating significant from similar pairs."""
    c = np.asarray(objective, dtype=np.float64)
    stat = np.abs(c[labels.i] - c[labels.j])
    return _mann_whitney_auc(stat[labels.significant], stat[~labels.significant])


def _oriented_margins(objective, labels: PairLabels, orientation: int) -> np.ndarray:
    c = np.asarray(objective, dtype=np.float64)
    sig = labels.significant
    if not sig.any():
        raise ValueError("no significantly different pairs")
    d = orientation * (c[labels.i[sig]] - c[labels.j[sig]])
    # margin of the subjectively better item over the worse one
    return d * labels.better[sig]


def auc_bw(objective, labels: PairLabels, orientation: int = 1) -> float:
    """ROC area of the oriented score difference for better-vs-worse ordering.

    Each significant pair contributes its better-minus-worse margin to the
    positive class and the reverse ordering to the negative class.
    ``orientation`` is +1 when a higher score means higher quality, -1 otherwise.
    """
    m = _oriented_margins(objective, labels, orientation)
    return _mann_whitney_auc(m, -m)


def c0(objective, labels: PairLabels, orientation: int = 1) -> float:
    """Fraction of significant pairs ordered correctly; ties count as wrong."""
    m = _oriented_margins(objective, labels, orientation)
    return float(np.count_nonzero(m > 0) / m.size)
