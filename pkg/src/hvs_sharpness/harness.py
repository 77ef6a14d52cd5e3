"""Dataset ingestion, blur series, batch scoring and benchmark reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import statistics as _pystats
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import statistics as st
from .filters import gaussian_taps, symmetric_filter1d
from .kernels import FirKernel, HvsKernelSpec, load_kernel
from .presets import SCORE_ORIENTATION, get_preset, preset_kernels
from .scoring import ComboConfig, ScoringError, as_gray_image, score_single, to_gray

__all__ = [
    "ManifestEntry",
    "ManifestError",
    "BenchmarkError",
    "KernelConfig",
    "EvalConfig",
    "BenchReport",
    "load_manifest",
    "write_manifest",
    "read_image",
    "write_image",
    "gaussian_blur",
    "write_blur_series",
    "resolve_kernels",
    "score_batch",
    "evaluate",
    "run_benchmark",
    "scalability_table",
    "run_scalability",
    "emit_report",
    "load_report",
    "format_number",
    "timing_profile",
    "write_table",
]

log = logging.getLogger(__name__)

WORKERS_ENV = "HVS_SHARPNESS_MAX_WORKERS"


class ManifestError(ValueError):
    pass


class BenchmarkError(RuntimeError):
    pass


def format_number(v) -> str:
    """Plain decimal with 15 significant digits (trailing zeros kept)."""
    if v is None:
        return ""
    return format(float(v), "#.15g")


# ---------------------------------------------------------------------------
# Manifests and images
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    subjective: float
    std: float | None = None
    group: str | None = None


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a ``path,subjective[,std][,group]`` CSV.

    Relative image paths are resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    entries = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest (missing header)") from None
        if header[:2] != ["path", "subjective"] or any(
            h not in ("std", "group") for h in header[2:]
        ):
            raise ManifestError(
                f"{path}:1: header must be path,subjective[,std][,group], got {','.join(header)}"
            )
        cols = {name: i for i, name in enumerate(header)}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ManifestError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                subj = float(row[cols["subjective"]])
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: subjective score {row[cols['subjective']]!r} is not a number"
                ) from None
            if not math.isfinite(subj):
                raise ManifestError(f"{path}:{lineno}: subjective score must be finite")
            std = None
            if "std" in cols and row[cols["std"]].strip():
                try:
                    std = float(row[cols["std"]])
                except ValueError:
                    raise ManifestError(
                        f"{path}:{lineno}: std {row[cols['std']]!r} is not a number"
                    ) from None
            group = row[cols["group"]].strip() or None if "group" in cols else None
            img = Path(row[cols["path"]].strip())
            if not img.is_absolute():
                img = base / img
            if not img.exists():
                raise ManifestError(f"{path}:{lineno}: image {img} does not exist")
            entries.append(ManifestEntry(path=img, subjective=subj, std=std, group=group))
    return entries


def write_manifest(path, entries) -> None:
    path = Path(path)
    has_std = any(e.std is not None for e in entries)
    has_group = any(e.group is not None for e in entries)
    header = ["path", "subjective"] + (["std"] if has_std else []) + (["group"] if has_group else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for e in entries:
            p = Path(e.path).resolve()
            try:
                p = p.relative_to(path.parent.resolve())
            except ValueError:
                pass
            row = [str(p), format_number(e.subjective)]
            if has_std:
                row.append(format_number(e.std))
            if has_group:
                row.append(e.group or "")
            w.writerow(row)


def read_image(path) -> np.ndarray:
    """Decode an image file to a normalized grayscale array."""
    with Image.open(path) as im:
        if im.mode in ("P", "PA", "CMYK", "YCbCr", "LAB", "HSV"):
            im = im.convert("RGB")
        elif im.mode == "LA":
            im = im.convert("L")
        elif im.mode == "1":
            im = im.convert("L")
        arr = np.asarray(im)
    if im.mode == "F":
        arr = np.clip(arr.astype(np.float64), 0.0, 1.0)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("="))
    return to_gray(arr)


def write_image(path, img: np.ndarray) -> None:
    """Save a grayscale array as a 16-bit PNG (or 8-bit for other formats)."""
    path = Path(path)
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if path.suffix.lower() == ".png":
        Image.fromarray(np.round(a * 65535).astype(np.uint16)).save(path)
    else:
        Image.fromarray(np.round(a * 255).astype(np.uint8)).save(path)


# ---------------------------------------------------------------------------
# Synthetic blur
# ---------------------------------------------------------------------------

def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with mirror boundaries (radius ``ceil(4 sigma)``)."""
    a = as_gray_image(img)
    g = gaussian_taps(sigma)
    out = symmetric_filter1d(symmetric_filter1d(a, g, axis=0), g, axis=1)
    return np.clip(out, 0.0, 1.0)


def write_blur_series(input_path, sigmas, outdir, manifest=None) -> list[ManifestEntry]:
    """Blur one image at each ``sigma`` (0 = original) and save 16-bit PNGs.

    The subjective column is ``-sigma`` so larger values mean sharper images;
    the group is the source file stem.
    """
    src = Path(input_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    img = read_image(src)
    entries = []
    for s in sigmas:
        s = float(s)
        if s < 0:
            raise ValueError(f"blur sigma must be non-negative, got {s}")
        out = img.copy() if s == 0 else gaussian_blur(img, s)
        dest = outdir / f"{src.stem}_sigma{s:g}.png"
        write_image(dest, out)
        entries.append(ManifestEntry(path=dest, subjective=0.0 - s, group=src.stem))
    if manifest is not None:
        write_manifest(manifest, entries)
    return entries


# ---------------------------------------------------------------------------
# Kernel configuration
# ---------------------------------------------------------------------------

@dataclass
class KernelConfig:
    """One or two kernels with their moment orders, and optional weights."""

    specs: list[HvsKernelSpec]
    kernels: list[FirKernel]
    labels: list[str]
    weights: tuple[float, float] | None = None
    orientation: int = SCORE_ORIENTATION

    def __post_init__(self):
        if len(self.kernels) not in (1, 2):
            raise ValueError(f"expected one or two kernels, got {len(self.kernels)}")
        if self.weights is not None and len(self.kernels) != 2:
            raise ValueError("weights apply only to a two-kernel combination")

    @property
    def moments(self) -> list[int]:
        return [s.moment for s in self.specs]

    def combo(self) -> ComboConfig:
        if self.weights is None:
            raise ValueError("a two-kernel score needs combination weights")
        return ComboConfig(kernels=tuple(self.kernels), moments=tuple(self.moments),
                           weights=tuple(self.weights))

    def describe(self) -> dict:
        out = []
        for label, s, k in zip(self.labels, self.specs, self.kernels):
            out.append({
                "source": label,
                "alpha": s.gg.alpha,
                "beta": s.gg.beta,
                "cutoff_over_pi": s.cutoff / math.pi,
                "terms": s.terms,
                "tap_length": s.tap_length,
                "moment": s.moment,
                "taps": [float(t) for t in k.taps],
                "norm_gain": float(k.norm_gain),
                "sha256": hashlib.sha256(k.taps.tobytes()).hexdigest(),
            })
        return {
            "kernels": out,
            "weights": list(self.weights) if self.weights is not None else None,
            "orientation": self.orientation,
        }


def resolve_kernels(refs, weights=None) -> KernelConfig:
    """Build a :class:`KernelConfig` from preset names and/or kernel JSON files."""
    specs, kernels, labels = [], [], []
    orientations = set()
    for ref in refs:
        p = Path(ref)
        if p.suffix.lower() == ".json" or p.is_file():
            spec, k, doc = load_kernel(p)
            specs.append(spec)
            kernels.append(k)
            labels.append(str(p))
            orientations.add(int(doc.get("orientation", SCORE_ORIENTATION)))
        else:
            preset = get_preset(ref)
            for i, (spec, k) in enumerate(preset_kernels(ref)):
                specs.append(spec)
                kernels.append(k)
                labels.append(f"{ref}[{i}]")
            orientations.add(preset.orientation)
    if len(orientations) > 1:
        raise ValueError("kernels disagree on score orientation")
    return KernelConfig(specs=specs, kernels=kernels, labels=labels,
                        weights=tuple(weights) if weights is not None else None,
                        orientation=orientations.pop())


# ---------------------------------------------------------------------------
# Batch scoring
# ---------------------------------------------------------------------------

def _worker_cap(requested: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    n = max(1, int(requested))
    if cap:
        n = min(n, max(1, int(cap)))
    return n


@dataclass
class ImageResult:
    index: int
    components: list[float] | None
    objective: float | None
    seconds: float | None
    error: str | None = None


def _score_one(index, img, kcfg: KernelConfig, reps: int) -> ImageResult:
    times = []
    comps = None
    try:
        for _ in range(reps):
            t0 = time.perf_counter()
            comps = [score_single(img, k, m).value for k, m in zip(kcfg.kernels, kcfg.moments)]
            times.append(time.perf_counter() - t0)
    except ScoringError as exc:
        return ImageResult(index, None, None, None, str(exc))
    if len(comps) == 2 and kcfg.weights is not None:
        obj = kcfg.weights[0] * comps[0] + kcfg.weights[1] * comps[1]
    elif len(comps) == 1:
        obj = comps[0]
    else:
        obj = None
    return ImageResult(index, comps, obj, _pystats.median(times))


def score_batch(images, kcfg: KernelConfig, workers: int = 1, reps: int = 1) -> list[ImageResult]:
    """Score a list of grayscale arrays (or paths), keyed by position.

    Decoding happens before the timed section.  Any worker count gives the same
    results as serial scoring.
    """
    def job(i_item):
        i, item = i_item
        img = read_image(item) if isinstance(item, (str, Path)) else item
        return _score_one(i, img, kcfg, reps)

    items = list(enumerate(images))
    n = _worker_cap(workers)
    if n == 1:
        results = [job(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(job, items))
    return sorted(results, key=lambda r: r.index)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalConfig:
    sig_threshold: float = 0.0
    z: float = 1.96
    within_groups: bool = False
    workers: int = 1
    time_reps: int = 1


def _mapping(x, y):
    if x.size >= 6:
        return st.fit_logistic(x, y)
    return st.affine_fit(x, y)


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ValueError as exc:
        log.warning("%s undefined: %s", fn.__name__, exc)
        return None


def evaluate(objective, subjective, std=None, groups=None, orientation: int = SCORE_ORIENTATION,
             cfg: EvalConfig | None = None) -> dict:
    """All agreement statistics for one score/rating set.

    PLCC and RMSE are taken after the logistic mapping (affine below six
    points); SRCC and KRCC use the raw scores.  Significance measures that are
    undefined for the data (e.g. no similar pairs) are reported as ``None``.
    """
    cfg = cfg or EvalConfig()
    x = np.asarray(objective, dtype=np.float64)
    y = np.asarray(subjective, dtype=np.float64)
    params, _ = _mapping(x, y)
    fitted = st.logistic_map(x, params)
    pairs = st.ScorePairs(x, y, subjective_std=std, groups=groups)
    labels = st.pair_significance(pairs, threshold=cfg.sig_threshold, z=cfg.z,
                                  within_groups=cfg.within_groups)
    return {
        "n": int(x.size),
        "plcc": _safe(st.plcc, fitted, y),
        "srcc": _safe(st.srcc, x, y),
        "krcc": _safe(st.krcc, x, y),
        "rmse": st.rmse(fitted, y),
        "auc_ds": _safe(st.auc_ds, x, labels),
        "auc_bw": _safe(st.auc_bw, x, labels, orientation),
        "c0": _safe(st.c0, x, labels, orientation),
        "significant_pairs": int(labels.significant.sum()),
        "similar_pairs": int((~labels.significant).sum()),
        "logistic": asdict(params),
        "fitted": fitted.tolist(),
    }


@dataclass
class BenchReport:
    images: list[dict]
    statistics: dict
    logistic: dict
    exclusions: list[dict]
    mean_time_sec: float
    kernel: dict
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> BenchReport:
        return cls(**d)


def run_benchmark(entries, kcfg: KernelConfig, cfg: EvalConfig | None = None) -> BenchReport:
    """Score every manifest image and evaluate against the subjective column."""
    cfg = cfg or EvalConfig()
    if len(kcfg.kernels) == 2 and kcfg.weights is None:
        raise BenchmarkError("a two-kernel benchmark needs weights (run calibrate first)")
    results = score_batch([e.path for e in entries], kcfg, workers=cfg.workers,
                          reps=cfg.time_reps)
    kept, exclusions = [], []
    for e, r in zip(entries, results):
        if r.error is not None:
            exclusions.append({"path": str(e.path), "reason": r.error})
        else:
            kept.append((e, r))
    if len(kept) < 3:
        raise BenchmarkError(f"only {len(kept)} scorable images; need at least 3")

    x = np.array([r.objective for _, r in kept])
    y = np.array([e.subjective for e, _ in kept])
    stds = [e.std for e, _ in kept]
    std = np.array(stds, dtype=np.float64) if all(s is not None for s in stds) else None
    groups = [e.group for e, _ in kept]
    ev = evaluate(x, y, std=std, groups=groups if all(g is not None for g in groups) else None,
                  orientation=kcfg.orientation, cfg=cfg)
    fitted = ev.pop("fitted")
    logistic = ev.pop("logistic")
    images = [
        {
            "path": str(e.path),
            "subjective": e.subjective,
            "objective": float(r.objective),
            "components": [float(c) for c in r.components],
            "fitted": float(f),
            "time_sec": float(r.seconds),
        }
        for (e, r), f in zip(kept, fitted)
    ]
    return BenchReport(
        images=images,
        statistics=ev,
        logistic=logistic,
        exclusions=exclusions,
        mean_time_sec=float(np.mean([r.seconds for _, r in kept])),
        kernel=kcfg.describe(),
        config=asdict(cfg),
    )


# ---------------------------------------------------------------------------
# Scalability
# ---------------------------------------------------------------------------

def scalability_table(objective, subjective, fractions, trials: int, seed: int,
                      fit: bool = True) -> list[dict]:
    """PLCC over random subsets drawn without replacement.

    One generator seeded with ``seed`` drives every draw, in fraction-major
    order, so the table is a pure function of its arguments.  Subset indices
    are sorted before evaluation.
    """
    x = np.asarray(objective, dtype=np.float64)
    y = np.asarray(subjective, dtype=np.float64)
    n = x.size
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    rows = []
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
        size = min(n, max(0, int(round(f * n))))
        for t in range(trials):
            idx = np.sort(rng.choice(n, size=size, replace=False))
            row = {"fraction": float(f), "trial": t, "n": int(size), "plcc": None, "note": ""}
            if size < 3:
                row["note"] = f"skipped: subset of {size} < 3 images"
                log.warning("fraction %g trial %d %s", f, t, row["note"])
            else:
                xs, ys = x[idx], y[idx]
                pred = st.logistic_map(xs, _mapping(xs, ys)[0]) if fit else xs
                try:
                    row["plcc"] = st.plcc(pred, ys)
                except ValueError as exc:
                    row["note"] = f"skipped: {exc}"
            rows.append(row)
    return rows


def run_scalability(entries, kcfg: KernelConfig, fractions, trials: int, seed: int,
                    workers: int = 1, fit: bool = True) -> list[dict]:
    """Score the manifest once, then tabulate subset PLCC."""
    results = score_batch([e.path for e in entries], kcfg, workers=workers)
    keep = [(e, r) for e, r in zip(entries, results) if r.error is None]
    x = [r.objective for _, r in keep]
    y = [e.subjective for e, _ in keep]
    return scalability_table(x, y, fractions, trials, seed, fit=fit)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def emit_report(report: BenchReport, path, fmt: str | None = None) -> Path:
    """Write a report as JSON (everything) or CSV (per-image rows)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "json").lower()
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "objective", "subjective", "fitted"])
            for row in report.images:
                w.writerow([row["path"], format_number(row["objective"]),
                            format_number(row["subjective"]), format_number(row["fitted"])])
    else:
        raise ValueError(f"unknown report format {fmt!r}; use json or csv")
    return path


def load_report(path) -> BenchReport:
    return BenchReport.from_dict(json.loads(Path(path).read_text()))


def write_table(path, rows: list[dict], columns: list[str]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([format_number(r[c]) if isinstance(r[c], float) else
                        ("" if r[c] is None else r[c]) for c in columns])


def timing_profile(kernel: FirKernel, moment: int, sizes, reps: int = 3,
                   seed: int = 0) -> list[dict]:
    """Median single-threaded ``score_single`` time on random square images."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        img = rng.random((int(n), int(n)))
        score_single(img, kernel, moment)  # warm caches
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            score_single(img, kernel, moment)
            times.append(time.perf_counter() - t0)
        rows.append({"size": int(n), "pixels": int(n) * int(n),
                     "seconds": float(_pystats.median(times))})
    return rows
