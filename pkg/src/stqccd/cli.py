"""Command-line entry point: ``stqccd-bench``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenes
from .bench import (FrameInput, RunSpec, emit_report, format_report, load_frames, loglog_slope,
                    run_benchmark, scaling_probe)
from .geometry import SceneError, read_manifest
from .narrowphase import NarrowConfig
from .pipeline import PipelineConfig

EXIT_OK, EXIT_FALSE_NEGATIVE, EXIT_INPUT = 0, 1, 2

SYNTHETIC = {
    "cloth": lambda n, seed: scenes.cloth_grid(n, n, seed=seed, motion=0.05),
    "sheets": lambda n, seed: scenes.two_sheets(n, seed=seed),
    "tets": lambda n, seed: scenes.tet_soup(n, seed=seed, extent=max(2.0, n ** (1 / 3) * 1.7)),
    "ribbon": lambda n, seed: scenes.ribbon(n, seed=seed),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stqccd-bench",
                                description="Broad/narrow-phase CCD benchmark and audit harness.")
    p.add_argument("--t0", action="append", default=[], type=Path, help="mesh at start of step")
    p.add_argument("--t1", action="append", default=[], type=Path, help="mesh at end of step")
    p.add_argument("--manifest", type=Path, help="JSON list of {t0, t1} frame pairs")
    p.add_argument("--synthetic", metavar="KIND:SIZE",
                   help=f"seeded generated scene instead of files ({', '.join(SYNTHETIC)})")
    p.add_argument("--method", action="append", choices=("stq", "bf", "sap"),
                   help="broad phase to run (repeatable; default stq)")
    p.add_argument("--delta", type=float, default=1e-6, help="narrow-phase tolerance")
    p.add_argument("--min-sep-fraction", type=float,
                   help="minimum separation as a fraction of each pair's initial distance")
    p.add_argument("--memory-budget", type=int, default=1 << 34, help="bytes")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--oracle", action="store_true", help="audit candidates against ground truth")
    p.add_argument("--no-zero-toi", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", type=Path, help="report path (default: stdout)")
    p.add_argument("--no-timing", action="store_true", help="zero the timing columns")
    p.add_argument("--scaling", help="comma-separated box fractions for a scaling probe")
    p.add_argument("--repeats", type=int, default=3, help="timing repetitions per cell")
    p.add_argument("--broad-only", action="store_true", help="skip the narrow phase")
    p.add_argument("--candidate-limit", type=int,
                   help="truncate candidate lists to this many pairs (audit demonstration)")
    return p


def _frames_from_args(args, errors) -> list:
    pairs = []
    if len(args.t0) != len(args.t1):
        raise SceneError("--t0 and --t1 must be given the same number of times")
    pairs += list(zip(args.t0, args.t1))
    if args.manifest:
        pairs += read_manifest(args.manifest)
    frames = load_frames(pairs, errors) if pairs else []
    if args.synthetic:
        kind, _, size = args.synthetic.partition(":")
        if kind not in SYNTHETIC:
            raise SceneError(f"unknown synthetic scene {kind!r}")
        n = int(size) if size else 20
        frames.append(FrameInput(f"{kind}{n}", 0, SYNTHETIC[kind](n, args.seed)))
    return pairs, frames


def _config(args) -> PipelineConfig:
    frac = args.min_sep_fraction
    if frac is None and args.no_zero_toi:
        frac = 0.2
    narrow = NarrowConfig(delta=args.delta,
                          min_separation="relative" if frac else 0.0,
                          no_zero_toi=args.no_zero_toi)
    return PipelineConfig(narrow=narrow, memory_budget=args.memory_budget,
                          min_sep_fraction=0.2 if frac is None else frac, threads=args.threads)


def _write(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    errors = []
    try:
        cfg = _config(args)
        pairs, frames = _frames_from_args(args, errors)
        if args.candidate_limit is not None and args.candidate_limit < 0:
            raise ValueError("--candidate-limit must be >= 0")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for e in errors:
        print(f"error: {e.source}: {e.message}", file=sys.stderr)
    if not frames:
        print("error: no scene could be loaded", file=sys.stderr)
        return EXIT_INPUT

    if args.scaling:
        try:
            fractions = [float(x) for x in args.scaling.split(",")]
            rows = scaling_probe(frames[0].scene, fractions, seed=args.seed, cfg=cfg,
                                 repeats=args.repeats, narrow=not args.broad_only)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        out = [vars(r) for r in rows]
        summary = {"rows": out}
        if len(rows) > 1:
            summary["broad_slope"] = loglog_slope([r.box_count for r in rows],
                                                  [max(r.broad_time, 1e-12) for r in rows])
        _write(json.dumps(summary, indent=1) + "\n", args.out)
        return EXIT_INPUT if errors else EXIT_OK

    spec = RunSpec(frame_pairs=pairs or [("<synthetic>", "<synthetic>")],
                   methods=args.method or ["stq"], pipeline=cfg, oracle_enabled=args.oracle,
                   output_path=args.out, no_zero_toi=args.no_zero_toi,
                   repeats=1 if args.no_timing else args.repeats, broad_only=args.broad_only,
                   candidate_limit=args.candidate_limit)
    rows = run_benchmark(spec, frames=frames)
    if args.out is None:
        sys.stdout.write(format_report(rows, args.format, no_timing=args.no_timing))
    else:
        emit_report(rows, args.out, args.format, no_timing=args.no_timing)
    if args.oracle and any(r.fn for r in rows):
        missed = sum(r.fn for r in rows)
        print(f"audit: {missed} false negative(s) detected", file=sys.stderr)
        return EXIT_FALSE_NEGATIVE
    return EXIT_INPUT if errors else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
