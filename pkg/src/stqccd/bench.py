"""Benchmark and audit harness: per-frame, per-method metrics and reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .broadphase import BROAD_PHASES, CandidateSet, NarrowQueries, classify
from .geometry import BoxSet, SceneError, SceneStep, build_boxes, load_scene
from .narrowphase import INTERVAL_BYTES, NO_COLLISION, narrow_phase
from .oracle import ground_truth_pairs
from .pipeline import BROAD_METHODS, PipelineConfig, _relative_separation, ccd, ccd_no_zero_toi

COLUMNS = ("scene", "frame", "method", "candidates", "fp", "fn", "t_boxes", "t_broad",
           "t_classify", "t_narrow", "peak_bytes", "toi")
TIMING_COLUMNS = ("t_boxes", "t_broad", "t_classify", "t_narrow")


@dataclass
class RunSpec:
    frame_pairs: list[tuple[Path, Path]]
    methods: list[str]
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    oracle_enabled: bool = False
    output_path: Optional[Path] = None
    no_zero_toi: bool = False
    repeats: int = 3
    broad_only: bool = False
    candidate_limit: Optional[int] = None

    def __post_init__(self):
        if not self.frame_pairs:
            raise ValueError("a run needs at least one frame pair")
        if not self.methods:
            raise ValueError("a run needs at least one method")
        self.methods = [m.lower() for m in self.methods]
        for m in self.methods:
            if m not in BROAD_METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class MetricsRow:
    scene: str
    frame: int
    method: str
    candidates: int
    fp: Optional[int]
    fn: Optional[int]
    t_boxes: float
    t_broad: float
    t_classify: float
    t_narrow: float
    peak_bytes: int
    toi: float

    @property
    def sort_key(self):
        return (self.scene, self.frame, self.method)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["toi"] = _toi_text(self.toi)
        return {k: d[k] for k in COLUMNS}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRow":
        def opt_int(x):
            return None if x in (None, "") else int(x)

        return cls(str(d["scene"]), int(d["frame"]), str(d["method"]), int(d["candidates"]),
                   opt_int(d["fp"]), opt_int(d["fn"]), float(d["t_boxes"]), float(d["t_broad"]),
                   float(d["t_classify"]), float(d["t_narrow"]), int(d["peak_bytes"]),
                   float(d["toi"]) if d["toi"] not in (None, "") else math.nan)


def _toi_text(toi: float) -> str:
    return "inf" if toi == NO_COLLISION else repr(float(toi))


@dataclass
class FrameInput:
    scene_id: str
    frame: int
    scene: SceneStep


@dataclass
class BenchError:
    source: str
    message: str


def load_frames(frame_pairs: Sequence[tuple[Path, Path]], errors: list[BenchError]
                ) -> list[FrameInput]:
    """Load every frame pair; failures are recorded and skipped."""
    frames = []
    counters: dict[str, int] = {}
    for p0, p1 in frame_pairs:
        scene_id = Path(p0).stem
        frame = counters.get(scene_id, 0)
        counters[scene_id] = frame + 1
        try:
            frames.append(FrameInput(scene_id, frame, load_scene(p0, p1)))
        except (OSError, SceneError, ValueError) as exc:
            errors.append(BenchError(f"{p0} / {p1}", str(exc)))
    return frames


def _median_times(samples: list[dict]) -> dict:
    return {k: statistics.median(s[k] for s in samples) for k in samples[0]}


def _truncated_cell(scene: SceneStep, method: str, cfg: PipelineConfig, limit: int,
                    broad_only: bool):
    """A method that keeps only the first ``limit`` candidates of a fixed array."""
    times = {}
    t = time.perf_counter()
    boxes = build_boxes(scene, cfg.inflation)
    times["t_boxes"] = time.perf_counter() - t
    t = time.perf_counter()
    cands = BROAD_PHASES[method](boxes, threads=cfg.threads)
    cands = CandidateSet(cands.pairs[:limit], boxes)
    times["t_broad"] = time.perf_counter() - t
    t = time.perf_counter()
    queries = NarrowQueries.concat(list(classify(cands, scene)))
    times["t_classify"] = time.perf_counter() - t
    toi = math.nan
    t = time.perf_counter()
    peak = boxes.nbytes + cands.pairs.nbytes + queries.nbytes
    if not broad_only:
        d = _relative_separation(cfg.narrow, cfg.min_sep_fraction, queries)
        res = narrow_phase(queries, cfg.narrow, threads=cfg.threads, min_separation=d)
        toi = res.toi_min
        peak += res.peak_queue * INTERVAL_BYTES
    times["t_narrow"] = time.perf_counter() - t
    return cands, times, peak, toi


def _pipeline_cell(scene: SceneStep, cfg: PipelineConfig, no_zero: bool, broad_only: bool):
    if broad_only:
        times = {}
        t = time.perf_counter()
        boxes = build_boxes(scene, cfg.inflation)
        times["t_boxes"] = time.perf_counter() - t
        t = time.perf_counter()
        cands = BROAD_PHASES[cfg.broad_method](boxes, threads=cfg.threads)
        times["t_broad"] = time.perf_counter() - t
        times["t_classify"] = times["t_narrow"] = 0.0
        return cands, times, boxes.nbytes + cands.pairs.nbytes, math.nan
    report = (ccd_no_zero_toi if no_zero else ccd)(scene, cfg)
    st = report.per_stage_times
    times = {"t_boxes": st["CB"], "t_broad": st["BP"], "t_classify": st["SO/CD"],
             "t_narrow": st["NP"]}
    return report.candidates, times, report.tracked_peak_bytes, report.toi.toi


def run_benchmark(spec: RunSpec, errors: Optional[list[BenchError]] = None,
                  frames: Optional[list[FrameInput]] = None) -> list[MetricsRow]:
    """One row per (frame, method); FP/FN only when the oracle is enabled."""
    errors = [] if errors is None else errors
    if frames is None:
        frames = load_frames(spec.frame_pairs, errors)
    rows = []
    for fr in frames:
        truth = ground_truth_pairs(fr.scene) if spec.oracle_enabled else None
        for method in spec.methods:
            cfg = dataclasses.replace(spec.pipeline, broad_method=method)
            samples = []
            for _ in range(spec.repeats):
                if spec.candidate_limit is not None:
                    cands, times, peak, toi = _truncated_cell(fr.scene, method, cfg,
                                                              spec.candidate_limit, spec.broad_only)
                else:
                    cands, times, peak, toi = _pipeline_cell(fr.scene, cfg, spec.no_zero_toi,
                                                             spec.broad_only)
                samples.append(times)
            fp = fn = None
            if truth is not None:
                found = cands.to_set()
                fn = len(truth.colliding - found)
                fp = len(found - truth.colliding - truth.indeterminate)
            t = _median_times(samples)
            rows.append(MetricsRow(fr.scene_id, fr.frame, method, len(cands), fp, fn,
                                   t["t_boxes"], t["t_broad"], t["t_classify"], t["t_narrow"],
                                   int(peak), float(toi)))
    rows.sort(key=lambda r: r.sort_key)
    return rows


def format_report(rows: Sequence[MetricsRow], fmt: str = "csv", no_timing: bool = False) -> str:
    """Rows sorted by (scene, frame, method) as CSV (RFC 4180) or JSON text."""
    if not rows:
        raise ValueError("no rows to report")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    dicts = []
    for r in sorted(rows, key=lambda r: r.sort_key):
        d = r.as_dict()
        if no_timing:
            for k in TIMING_COLUMNS:
                d[k] = 0.0
        dicts.append(d)
    if fmt == "json":
        return json.dumps(dicts, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\r\n")
    w.writeheader()
    for d in dicts:
        w.writerow({k: "" if v is None else v for k, v in d.items()})
    return buf.getvalue()


def emit_report(rows: Sequence[MetricsRow], path, fmt: str = "csv",
                no_timing: bool = False) -> None:
    """Write :func:`format_report` output to ``path``."""
    text = format_report(rows, fmt, no_timing)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def load_report(path, fmt: Optional[str] = None) -> list[MetricsRow]:
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    with open(path, newline="") as fh:
        data = json.load(fh) if fmt == "json" else list(csv.DictReader(fh))
    return [MetricsRow.from_dict(d) for d in data]


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

@dataclass
class ScalingRow:
    fraction: float
    box_count: int
    candidates: int
    broad_time: float
    narrow_time: float


def _timed(fn: Callable, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return out, statistics.median(times)


def subsample(boxes: BoxSet, fraction: float, seed: int = 0) -> BoxSet:
    """Seeded random subset of ``round(fraction * len(boxes))`` boxes, in original order."""
    if not 0 < fraction <= 1:
        raise ValueError("fractions must lie in (0, 1]")
    if fraction == 1:
        return boxes
    rng = np.random.default_rng(seed)
    m = max(1, int(round(fraction * len(boxes))))
    idx = np.sort(rng.permutation(len(boxes))[:m])
    return boxes.subset(idx)


def scaling_probe(scene: SceneStep, fractions: Sequence[float], seed: int = 0,
                  cfg: Optional[PipelineConfig] = None, repeats: int = 3,
                  narrow: bool = True) -> list[ScalingRow]:
    """Broad- and narrow-phase time on seeded random box subsamples."""
    cfg = cfg or PipelineConfig()
    boxes = build_boxes(scene, cfg.inflation)
    broad = BROAD_PHASES[cfg.broad_method]
    rows = []
    for f in fractions:
        sub = subsample(boxes, f, seed)
        cands, t_broad = _timed(lambda: broad(sub, threads=cfg.threads), repeats)
        t_narrow = 0.0
        if narrow:
            queries = NarrowQueries.concat(list(classify(cands, scene)))
            d = _relative_separation(cfg.narrow, cfg.min_sep_fraction, queries)
            _, t_narrow = _timed(lambda: narrow_phase(queries, cfg.narrow, threads=cfg.threads,
                                                      min_separation=d), repeats)
        rows.append(ScalingRow(float(f), len(sub), len(cands), t_broad, t_narrow))
    return rows


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass
class ThreadRow:
    threads: int
    broad_time: float
    speedup: float


def thread_scaling(boxes: BoxSet, thread_counts: Sequence[int] = (1, 2, 4, 8),
                   method: str = "stq", repeats: int = 3) -> list[ThreadRow]:
    """Broad-phase time for a fixed box set at several thread counts."""
    broad = BROAD_PHASES[method]
    broad(boxes, threads=max(thread_counts))  # compile and warm the pool paths
    rows, base = [], None
    for n in thread_counts:
        _, t = _timed(lambda: broad(boxes, threads=n), repeats)
        base = t if base is None else base
        rows.append(ThreadRow(int(n), t, base / t if t > 0 else math.inf))
    return rows

