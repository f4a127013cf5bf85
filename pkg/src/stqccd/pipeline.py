"""End-to-end CCD: boxes, broad phase, classification, narrow phase.

Memory is modelled with a caller-supplied byte budget. The broad phase runs
over ranges of sweep seeds whose candidate buffer must fit the budget; the
narrow phase gets the remainder as its interval queue. Either overflow makes
the batch smaller instead of failing. Per-query narrow results do not depend
on batch composition, so the minimum over batches is budget independent.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import chunk_ranges, run_chunks
from .broadphase import (BROAD_PHASES, BroadStats, CandidateSet, NarrowQueries, SortedBoxes,
                         _bf_kernel, _sap_kernel, _stq_kernel, _sum_rounds, canonical_pairs,
                         choose_axis, classify)
from .distance import query_distances
from .geometry import BoxSet, SceneStep, build_boxes
from .narrowphase import (INTERVAL_BYTES, NO_COLLISION, NarrowConfig, QueueOverflow, ToiResult,
                          narrow_phase)

BROAD_METHODS = ("stq", "bf", "sap")
#: multiplier applied to the time found by the zero-time retry
RETRY_SCALE = 0.8

STAGES = ("CB", "BP", "SO/CD", "NP")


class BudgetError(ValueError):
    """The memory budget cannot hold even the smallest batch."""


@dataclass(frozen=True)
class RecordSizes:
    """Byte sizes used by the batching arithmetic."""

    S_P: int = 56          # input parameters
    S_Q: int = 24 * 8      # one narrow-phase query
    S_I: int = 252         # one queued interval
    S_i: int = 8           # one index

    def __post_init__(self):
        if min(self.S_P, self.S_Q, self.S_I, self.S_i) <= 0:
            raise ValueError("record sizes must be positive")

    @property
    def candidate(self) -> int:
        return self.S_Q + 3 * self.S_i


#: sizes of the structures this implementation really allocates
HOST_RECORD_SIZES = {"box": 2 * 3 * 4 + 1 + 8 + 3 * 8, "candidate": 2 * 8,
                     "query": 1 + 2 * 12 * 8 + 4 * 8, "interval": INTERVAL_BYTES}


@dataclass
class PipelineConfig:
    narrow: NarrowConfig = field(default_factory=NarrowConfig)
    broad_method: str = "stq"
    memory_budget: int = 1 << 34
    record_sizes: RecordSizes = field(default_factory=RecordSizes)
    min_sep_fraction: float = 0.2
    threads: int = 1
    inflation: float = 0.0

    def __post_init__(self):
        self.broad_method = self.broad_method.lower()
        if self.broad_method not in BROAD_METHODS:
            raise ValueError(f"unknown broad phase {self.broad_method!r}")
        if not self.memory_budget > self.record_sizes.S_P:
            raise ValueError("memory_budget must exceed the parameter block size")
        if not self.min_sep_fraction >= 0:
            raise ValueError("min_sep_fraction must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def candidate_capacity(self) -> int:
        rs = self.record_sizes
        return (self.memory_budget - rs.S_P) // rs.candidate


@dataclass
class BatchTrace:
    """One executed (broad range, narrow sub-batch) cell."""

    seed_range: tuple[int, int]
    candidates: int
    queries: int
    query_range: tuple[int, int]
    toi: float


@dataclass
class CcdReport:
    toi: ToiResult
    candidate_count: int
    batch_count: int
    per_stage_times: dict[str, float]
    tracked_peak_bytes: int
    wall_time: float = 0.0
    candidates: Optional[CandidateSet] = None
    batches: list[BatchTrace] = field(default_factory=list)
    broad_stats: Optional[BroadStats] = None
    retried: bool = False
    retry_toi: Optional[float] = None
    zero_toi_unresolved: bool = False
    record_sizes: dict[str, int] = field(default_factory=lambda: dict(HOST_RECORD_SIZES))
    queries: Optional[NarrowQueries] = field(default=None, repr=False)


class _Tracker:
    """Peak of the bytes held by pipeline-owned arrays."""

    def __init__(self):
        self.peak = 0

    def note(self, nbytes: int) -> None:
        self.peak = max(self.peak, int(nbytes))


class _Starved(Exception):
    """A single query does not fit the narrow-phase share of the budget."""


def _broad_range(sb: SortedBoxes, method: str, start: int, end: int, capacity: int,
                 threads: int):
    """Candidates seeded in sorted positions [start, end), or None on overflow.

    Returns (pairs, round_sizes); the seed range is split across threads and
    the chunks' round sizes are summed.
    """
    def run(s, e):
        if method == "stq":
            pairs, _, overflow, rounds = _stq_kernel(sb.lo, sb.hi, sb.order, sb.kind, sb.verts,
                                                     sb.axis, s, e, capacity)
            return (None if overflow else pairs), rounds
        if method == "sap":
            pairs = _sap_kernel(sb.lo, sb.hi, sb.order, sb.kind, sb.verts, sb.axis, s, e)
        else:
            # brute-force rows follow the sweep order so seed ranges partition the pairs
            pairs = sb.order[_bf_kernel(sb.lo, sb.hi, sb.kind, sb.verts, s, e)]
        return (None if len(pairs) > capacity else pairs), np.zeros(0, np.int64)

    ranges = chunk_ranges(end - start, 4 * threads if threads > 1 else 1)
    parts = run_chunks(lambda s, e: run(start + s, start + e), ranges, threads)
    if any(p is None for p, _ in parts):
        return None, []
    pairs = np.concatenate([p for p, _ in parts]).reshape(-1, 2)
    if len(pairs) > capacity:
        return None, []
    return pairs, _sum_rounds([r for _, r in parts])


def _relative_separation(narrow: NarrowConfig, fraction: float, queries: NarrowQueries):
    """Per-query separation for 'relative' configs, else None (config value applies)."""
    if narrow.min_separation == "relative":
        return fraction * query_distances(queries)
    return None


def _narrow_batched(queries: NarrowQueries, dsep, cfg: PipelineConfig, capacity: int,
                    lo: int, hi: int, out_toi: np.ndarray, out_hit: np.ndarray,
                    out_stuck: np.ndarray, cells: list, tracker: _Tracker, base: int,
                    narrow: NarrowConfig):
    """Run queries[lo:hi], halving on queue overflow."""
    sub = queries[lo:hi]
    try:
        res = narrow_phase(sub, narrow, threads=cfg.threads,
                           min_separation=None if dsep is None else dsep[lo:hi],
                           capacity=capacity)
    except QueueOverflow:
        if hi - lo <= 1:
            raise _Starved()
        mid = (lo + hi) // 2
        _narrow_batched(queries, dsep, cfg, capacity, lo, mid, out_toi, out_hit, out_stuck,
                        cells, tracker, base, narrow)
        _narrow_batched(queries, dsep, cfg, capacity, mid, hi, out_toi, out_hit, out_stuck,
                        cells, tracker, base, narrow)
        return
    out_toi[lo:hi] = res.toi
    out_hit[lo:hi] = res.tolerance_hit
    out_stuck[lo:hi] = res.zero_unresolved
    tracker.note(base + sub.nbytes + res.peak_queue * INTERVAL_BYTES)
    cells.append(((lo, hi), res.toi_min))


@dataclass
class _BatchResult:
    pairs: list
    queries: list
    toi: list
    hit: list
    stuck: list
    traces: list
    round_sizes: list
    t_broad: float = 0.0
    t_classify: float = 0.0
    t_narrow: float = 0.0


def run_batched(scene: SceneStep, boxes: BoxSet, cfg: PipelineConfig,
                narrow: Optional[NarrowConfig] = None, run_narrow: bool = True,
                tracker: Optional[_Tracker] = None) -> _BatchResult:
    """Broad and narrow phases under ``cfg.memory_budget``.

    Seed ranges are halved until their candidates fit the candidate buffer
    and their queries fit the remaining interval queue; query lists are
    halved on queue overflow.
    """
    narrow = narrow or cfg.narrow
    tracker = tracker or _Tracker()
    rs = cfg.record_sizes
    capacity = cfg.candidate_capacity
    if capacity < 1:
        raise BudgetError("memory budget cannot hold a single candidate")
    out = _BatchResult([], [], [], [], [], [], [])
    k = len(boxes)
    if k < 2:
        return out
    t = time.perf_counter()
    sb = SortedBoxes.build(boxes)
    out.t_broad += time.perf_counter() - t
    base = boxes.nbytes + sb.lo.nbytes + sb.hi.nbytes + sb.order.nbytes + sb.kind.nbytes + sb.verts.nbytes
    tracker.note(base)
    rounds_total = np.zeros(0, np.int64)

    stack = [(0, k - 1)]
    while stack:
        start, end = stack.pop()
        t = time.perf_counter()
        pairs, rounds = _broad_range(sb, cfg.broad_method, start, end, capacity, cfg.threads)
        out.t_broad += time.perf_counter() - t
        if pairs is None:
            if end - start <= 1:
                raise BudgetError("memory budget cannot hold the candidates of one box")
            mid = (start + end) // 2
            stack += [(mid, end), (start, mid)]
            continue
        t = time.perf_counter()
        pairs = canonical_pairs(pairs, boxes)
        cands = CandidateSet(pairs, boxes)
        vf, ee = classify(cands, scene)
        queries = NarrowQueries.concat([vf, ee])
        out.t_classify += time.perf_counter() - t
        held = base + pairs.nbytes + queries.nbytes
        tracker.note(held)
        n = len(queries)
        toi = np.full(n, NO_COLLISION)
        hit = np.zeros(n, bool)
        stuck = np.zeros(n, bool)
        cells: list = []
        if run_narrow and n:
            remaining = cfg.memory_budget - rs.S_P - len(pairs) * rs.candidate
            qcap = remaining // rs.S_I
            t = time.perf_counter()
            try:
                if qcap < 1:
                    raise _Starved()
                dsep = _relative_separation(narrow, cfg.min_sep_fraction, queries)
                _narrow_batched(queries, dsep, cfg, int(qcap), 0, n, toi, hit, stuck, cells,
                                tracker, held, narrow)
            except _Starved:
                out.t_narrow += time.perf_counter() - t
                if end - start <= 1:
                    raise BudgetError("memory budget cannot hold the narrow phase of one query")
                mid = (start + end) // 2
                stack += [(mid, end), (start, mid)]
                continue
            out.t_narrow += time.perf_counter() - t
        if not cells:
            cells = [((0, n), NO_COLLISION)]
        if len(rounds):
            r = np.asarray(rounds, np.int64)
            if len(r) > len(rounds_total):
                rounds_total = np.concatenate([rounds_total, np.zeros(len(r) - len(rounds_total), np.int64)])
            rounds_total[:len(r)] += r
        out.pairs.append(pairs)
        out.queries.append(queries)
        out.toi.append(toi)
        out.hit.append(hit)
        out.stuck.append(stuck)
        for (qlo, qhi), ctoi in cells:
            out.traces.append(BatchTrace((start, end), len(pairs), n, (qlo, qhi), ctoi))
    out.round_sizes = [int(x) for x in rounds_total]
    return out


def _merge_candidates(parts: list, boxes: BoxSet) -> CandidateSet:
    if not parts:
        return CandidateSet(np.empty((0, 2), np.int64), boxes)
    return CandidateSet(canonical_pairs(np.concatenate(parts), boxes), boxes)


def ccd(scene: SceneStep, cfg: Optional[PipelineConfig] = None) -> CcdReport:
    """Earliest conservative time of impact over a whole scene step."""
    cfg = cfg or PipelineConfig()
    wall = time.perf_counter()
    tracker = _Tracker()
    t = time.perf_counter()
    boxes = build_boxes(scene, cfg.inflation)
    t_cb = time.perf_counter() - t
    tracker.note(boxes.nbytes)
    res = run_batched(scene, boxes, cfg, tracker=tracker)
    toi = np.concatenate(res.toi) if res.toi else np.empty(0)
    hit = np.concatenate(res.hit) if res.hit else np.empty(0, bool)
    stuck = np.concatenate(res.stuck) if res.stuck else np.empty(0, bool)
    best = float(toi.min()) if len(toi) else NO_COLLISION
    tol = bool(hit[toi == best].any()) if math.isfinite(best) else False
    t = time.perf_counter()
    cands = _merge_candidates(res.pairs, boxes)
    res.t_broad += time.perf_counter() - t
    stats = BroadStats(axis=choose_axis(boxes) if len(boxes) else -1,
                       round_sizes=res.round_sizes)
    report = CcdReport(
        toi=ToiResult(best, tol),
        candidate_count=len(cands),
        batch_count=max(1, len(res.traces)),
        per_stage_times={"CB": t_cb, "BP": res.t_broad, "SO/CD": res.t_classify,
                         "NP": res.t_narrow},
        tracked_peak_bytes=tracker.peak,
        candidates=cands,
        batches=res.traces,
        broad_stats=stats,
        zero_toi_unresolved=bool(stuck.any()),
    )
    report.queries = NarrowQueries.concat(res.queries)
    report.wall_time = time.perf_counter() - wall
    return report


def ccd_no_zero_toi(scene: SceneStep, cfg: Optional[PipelineConfig] = None) -> CcdReport:
    """CCD that never returns 0 for an intersection-free start.

    A zero answer (caused by the separation cube or the tolerance) triggers a
    rerun of the narrow phase with zero separation in which intervals starting
    at t = 0 are always split; the rerun's time is scaled by 0.8.
    """
    cfg = cfg or PipelineConfig(narrow=NarrowConfig(min_separation="relative", no_zero_toi=True))
    # the first pass is a plain separated run; the always-split rule belongs to the retry
    first = dataclasses.replace(cfg, narrow=dataclasses.replace(cfg.narrow, no_zero_toi=False))
    report = ccd(scene, first)
    if report.toi.toi != 0.0:
        return report
    wall = time.perf_counter()
    retry_cfg = dataclasses.replace(cfg.narrow, min_separation=0.0, no_zero_toi=True)
    queries = report.queries
    t = time.perf_counter()
    rs = cfg.record_sizes
    qcap = max(1, (cfg.memory_budget - rs.S_P - len(queries) * rs.candidate) // rs.S_I)
    toi = np.full(len(queries), NO_COLLISION)
    hit = np.zeros(len(queries), bool)
    stuck = np.zeros(len(queries), bool)
    cells: list = []
    tracker = _Tracker()
    try:
        _narrow_batched(queries, None, cfg, int(qcap), 0, len(queries), toi, hit, stuck,
                        cells, tracker, queries.nbytes, retry_cfg)
    except _Starved:
        raise BudgetError("memory budget cannot hold the zero-time retry of one query")
    report.per_stage_times["NP"] += time.perf_counter() - t
    report.batch_count += len(cells)
    report.tracked_peak_bytes = max(report.tracked_peak_bytes, tracker.peak)
    raw = float(toi.min()) if len(toi) else NO_COLLISION
    report.retried = True
    report.retry_toi = raw
    report.zero_toi_unresolved = bool(stuck.any())
    if raw == 0.0:
        # only an unsplittable zero-time interval can produce this
        report.toi = ToiResult(0.0, True)
    else:
        best_hit = bool(hit[toi == raw].any()) if math.isfinite(raw) else False
        report.toi = ToiResult(raw * RETRY_SCALE, best_hit)
    report.wall_time += time.perf_counter() - wall
    return report


def unbatched_candidates(scene: SceneStep, cfg: Optional[PipelineConfig] = None) -> CandidateSet:
    """Candidate set of a single unbounded broad-phase run (reference for batching)."""
    cfg = cfg or PipelineConfig()
    boxes = build_boxes(scene, cfg.inflation)
    return BROAD_PHASES[cfg.broad_method](boxes, threads=cfg.threads)
