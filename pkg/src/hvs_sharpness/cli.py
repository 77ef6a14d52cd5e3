"""Command-line entry point: ``hvs-sharpness <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness as hn
from . import statistics as st
from .kernels import GGParams, HvsKernelSpec, save_kernel, synthesize
from .presets import PRESETS, SCORE_ORIENTATION, UnknownPresetError


class UsageError(Exception):
    """Bad arguments discovered after parsing (exit code 2)."""


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_fractions(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    if ":" not in text:
        return _float_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("range must be start:step:stop")
    try:
        a, step, b = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError("range needs step > 0 and stop >= start")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(count)]


def _weights(text: str | None):
    if text is None:
        return None
    p = Path(text)
    if p.suffix.lower() == ".json" or p.is_file():
        doc = json.loads(p.read_text())
        w = doc.get("weights")
        if not isinstance(w, list) or len(w) != 2:
            raise UsageError(f"{p}: no two-element 'weights' entry")
        return tuple(float(v) for v in w)
    try:
        w = _float_list(text)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None
    if len(w) != 2:
        raise UsageError(f"--weights needs two values, got {text!r}")
    return tuple(w)


def _kernels(args, default=None) -> hn.KernelConfig:
    refs = args.kernel or ([default] if default else [])
    if not refs:
        raise UsageError("at least one --kernel is required")
    kcfg = hn.resolve_kernels(refs, _weights(getattr(args, "weights", None)))
    if len(kcfg.kernels) == 2 and kcfg.weights is None and getattr(args, "need_weights", True):
        raise UsageError("two kernels need --weights w1,w2 or a calibrate output file")
    return kcfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = HvsKernelSpec(gg=GGParams(args.alpha, args.beta), cutoff=args.cutoff_over_pi * math.pi,
                         terms=args.terms, tap_length=args.taps, moment=args.moment)
    kernel = synthesize(spec)
    save_kernel(args.output, spec, kernel, preset_note=args.note, orientation=SCORE_ORIENTATION)
    print(f"wrote {args.output} (norm_gain {kernel.norm_gain:.6g})")
    if args.figure:
        from .plotting import plot_kernel
        plot_kernel(spec, kernel, args.figure)
    return 0


def cmd_score(args) -> int:
    kcfg = _kernels(args)
    results = hn.score_batch(args.paths, kcfg, workers=args.workers)
    rows = []
    failed = 0
    for path, r in zip(args.paths, results):
        if r.error is not None:
            failed += 1
            print(f"{path}: {r.error}", file=sys.stderr)
            rows.append((path, None, [None] * len(kcfg.kernels)))
        else:
            rows.append((path, r.objective, r.components))
    for path, obj, _ in rows:
        print(f"{path},{hn.format_number(obj)}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "score"] + [f"c{i + 1}" for i in range(len(kcfg.kernels))])
            for path, obj, comps in rows:
                w.writerow([path, hn.format_number(obj)] + [hn.format_number(c) for c in comps])
    return 1 if failed == len(rows) else 0


def cmd_bench(args) -> int:
    kcfg = _kernels(args)
    entries = hn.load_manifest(args.manifest)
    cfg = hn.EvalConfig(sig_threshold=args.sig_threshold, z=args.z,
                        within_groups=args.within_groups, workers=args.workers,
                        time_reps=3 if args.time else 1)
    report = hn.run_benchmark(entries, kcfg, cfg)
    hn.emit_report(report, args.out)
    if args.csv:
        hn.emit_report(report, args.csv, "csv")
    s = report.statistics
    for key in ("n", "plcc", "srcc", "krcc", "rmse", "auc_ds", "auc_bw", "c0"):
        v = s[key]
        print(f"{key}: {'n/a' if v is None else (v if key == 'n' else f'{v:.4f}')}")
    print(f"mean_time_sec: {report.mean_time_sec:.4f}")
    if report.exclusions:
        print(f"excluded: {len(report.exclusions)}")
    if args.figure:
        from .plotting import plot_scatter
        plot_scatter([r["objective"] for r in report.images],
                     [r["subjective"] for r in report.images], report.logistic, args.figure)
    return 0


def cmd_calibrate(args) -> int:
    args.need_weights = False
    kcfg = _kernels(args)
    if len(kcfg.kernels) != 2:
        raise UsageError("calibrate needs exactly two kernels")
    entries = hn.load_manifest(args.manifest)
    results = hn.score_batch([e.path for e in entries], kcfg, workers=args.workers)
    keep = [(e, r) for e, r in zip(entries, results) if r.error is None]
    for e, r in zip(entries, results):
        if r.error is not None:
            print(f"{e.path}: excluded ({r.error})", file=sys.stderr)
    m = np.array([r.components for _, r in keep], dtype=np.float64).reshape(-1, 2)
    y = np.array([e.subjective for e, _ in keep])
    fit = st.fit_combo(m, y)
    desc = kcfg.describe()
    doc = {
        "weights": list(fit.weights),
        "logistic": asdict(fit.params),
        "final_rmse": fit.final_rmse,
        "n": int(y.size),
        "kernels": desc["kernels"],
        "orientation": desc["orientation"],
    }
    Path(args.output).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"weights: {fit.weights[0]:.6g},{fit.weights[1]:.6g}  rmse: {fit.final_rmse:.6g}")
    return 0


def cmd_blurseries(args) -> int:
    entries = hn.write_blur_series(args.input, args.sigmas, args.outdir, manifest=args.manifest)
    for e in entries:
        print(e.path)
    return 0


def cmd_scale(args) -> int:
    kcfg = _kernels(args, default="natural-1")
    entries = hn.load_manifest(args.manifest)
    rows = hn.run_scalability(entries, kcfg, args.fractions, args.trials, args.seed,
                              workers=args.workers, fit=not args.raw)
    hn.write_table(args.out, rows, ["fraction", "trial", "n", "plcc", "note"])
    skipped = sum(1 for r in rows if r["plcc"] is None)
    print(f"wrote {len(rows)} rows to {args.out}" + (f" ({skipped} skipped)" if skipped else ""))
    if args.figure:
        from .plotting import plot_scalability
        plot_scalability(rows, args.figure)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hvs-sharpness",
                                description="No-reference sharpness scoring with HVS-like kernels.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def kernel_opts(sp, required=True):
        sp.add_argument("--kernel", action="append", required=required,
                        help=f"preset ({', '.join(PRESETS)}) or kernel JSON; repeatable")
        sp.add_argument("--weights", help="w1,w2 or a calibrate output file")
        sp.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("synth", help="design a kernel and write it as JSON")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--cutoff-over-pi", type=float, default=0.6)
    s.add_argument("--terms", type=int, default=3)
    s.add_argument("--taps", type=int, default=25)
    s.add_argument("--moment", type=int, default=12)
    s.add_argument("--note", default="")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--figure", help="PNG of the density, spectrum, taps and response")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("score", help="score image files")
    s.add_argument("paths", nargs="+")
    kernel_opts(s)
    s.add_argument("--out", help="CSV of path,score[,components]")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("bench", help="evaluate scores against a manifest")
    s.add_argument("--manifest", required=True)
    kernel_opts(s)
    s.add_argument("--sig-threshold", type=float, default=0.0)
    s.add_argument("--z", type=float, default=1.96)
    s.add_argument("--within-groups", action="store_true",
                   help="only compare images of the same group")
    s.add_argument("--time", action="store_true", help="median of 3 timed runs per image")
    s.add_argument("--out", required=True, help="report path (.json or .csv)")
    s.add_argument("--csv", help="additional per-image CSV")
    s.add_argument("--figure", help="PNG scatter with the fitted logistic curve")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("calibrate", help="fit two-kernel combination weights")
    s.add_argument("--manifest", required=True)
    kernel_opts(s)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("blurseries", help="write Gaussian-blurred copies and a manifest")
    s.add_argument("--input", required=True)
    s.add_argument("--sigmas", type=_float_list, required=True)
    s.add_argument("--outdir", required=True)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_blurseries)

    s = sub.add_parser("scale", help="PLCC over random dataset subsets")
    s.add_argument("--manifest", required=True)
    kernel_opts(s, required=False)
    s.add_argument("--fractions", type=parse_fractions, default=parse_fractions("0.03:0.03:0.30"))
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--raw", action="store_true", help="PLCC of raw scores (skip logistic fit)")
    s.add_argument("--out", required=True)
    s.add_argument("--figure", help="PNG box plot per fraction")
    s.set_defaults(func=cmd_scale)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UnknownPresetError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
