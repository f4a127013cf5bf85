"""Queue-based inclusion-function narrow phase with time of impact.

Each query seeds the parameter box [0,1]^3 over (t, u, v). Boxes are processed
in rounds: every box of the current queue is pruned, reported as a collision
at its lower time bound, or bisected into the next queue. Rounds read the
per-query best time as it stood when the round began, so the result does not
depend on how a round is split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from ._parallel import chunk_ranges, run_chunks
from .broadphase import NarrowQueries, NarrowQuery, as_queries
from .interval import add_bounds, iadd, isub, smul

NO_COLLISION = math.inf

# per-interval outcomes of _process_one
PRUNED, COLLISION, SPLIT, ZERO_STUCK = 0, 1, 2, 3

#: bytes of one queued interval in this implementation (qid + 6 doubles)
INTERVAL_BYTES = 8 + 6 * 8


class QueueOverflow(RuntimeError):
    """The interval queue outgrew its capacity; the batch must be re-run smaller."""


@dataclass
class NarrowConfig:
    delta: float = 1e-6
    min_separation: Union[float, str] = 0.0
    t_max: float = 1.0
    max_splits: int = 2 ** 20
    no_zero_toi: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.max_splits < 1:
            raise ValueError("max_splits must be >= 1")
        if isinstance(self.min_separation, str):
            if self.min_separation != "relative":
                raise ValueError("min_separation must be a distance or 'relative'")
        elif not self.min_separation >= 0:
            raise ValueError("min_separation must be >= 0")
        if not 0.0 <= self.t_max <= 1.0:
            raise ValueError("t_max must lie in [0, 1]")


@dataclass(frozen=True)
class Interval:
    low: float
    high: float

    @property
    def width(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class IntervalBox:
    query_id: int
    t: Interval
    u: Interval
    v: Interval

    @classmethod
    def root(cls, query_id: int = 0) -> "IntervalBox":
        unit = Interval(0.0, 1.0)
        return cls(query_id, unit, unit, unit)

    @property
    def depth(self) -> tuple[int, int, int]:
        """Number of bisections applied to each of (t, u, v)."""
        return tuple(int(round(-math.log2(iv.width))) if iv.width > 0 else 1074
                     for iv in (self.t, self.u, self.v))

    def as_array(self) -> np.ndarray:
        return np.array([self.t.low, self.t.high, self.u.low, self.u.high,
                         self.v.low, self.v.high], dtype=np.float64)

    @classmethod
    def from_array(cls, qid: int, a) -> "IntervalBox":
        return cls(int(qid), Interval(float(a[0]), float(a[1])),
                   Interval(float(a[2]), float(a[3])), Interval(float(a[4]), float(a[5])))


@dataclass(frozen=True)
class ToiResult:
    toi: float = NO_COLLISION
    tolerance_hit: bool = False

    @property
    def collides(self) -> bool:
        return math.isfinite(self.toi)


@dataclass
class NarrowOutcome:
    """Per-query and global results of one narrow-phase run."""

    toi: np.ndarray
    tolerance_hit: np.ndarray
    zero_unresolved: np.ndarray
    rounds: int = 0
    peak_queue: int = 0
    intervals_processed: int = 0
    tstar_trace: list[float] = field(default_factory=list)

    @property
    def results(self) -> list[ToiResult]:
        return [ToiResult(float(t), bool(h)) for t, h in zip(self.toi, self.tolerance_hit)]

    @property
    def toi_min(self) -> float:
        return float(self.toi.min()) if len(self.toi) else NO_COLLISION

    @property
    def tolerance_hit_any(self) -> bool:
        return bool(self.tolerance_hit.any())

    def __iter__(self):
        # (per-query results, global minimum)
        yield self.results
        yield self.toi_min


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _coefficients(kind, P0, P1, coef):
    """Interval coefficients of F(t, u, v) = G(t) + u*H(t) - v*K(t).

    Each of G, H, K is linear in time: X(t) = X0 + t*dX. ``coef[j]`` for
    j = 0..5 holds G0, dG, H0, dH, K0, dK as (3 components x [lo, hi]).
      vertex-face (p, a, b, c): G = p - a,   H = a - b,   K = c - a
      edge-edge (p0, p1, p2, p3): G = p0 - p2, H = p1 - p0, K = p3 - p2
    """
    if kind == 0:
        terms = ((0, 1), (1, 2), (3, 1))
    else:
        terms = ((0, 2), (1, 0), (3, 2))
    for j in range(3):
        a, b = terms[j]
        for c in range(3):
            l0, h0 = add_bounds(P0[a, c], -P0[b, c])
            l1, h1 = add_bounds(P1[a, c], -P1[b, c])
            coef[2 * j, c, 0] = l0
            coef[2 * j, c, 1] = h0
            dl, dh = isub(l1, h1, l0, h0)
            coef[2 * j + 1, c, 0] = dl
            coef[2 * j + 1, c, 1] = dh


@njit(cache=True, nogil=True)
def _all_coefficients(kinds, pts0, pts1):
    n = kinds.shape[0]
    coef = np.empty((n, 6, 3, 2))
    for q in range(n):
        _coefficients(kinds[q], pts0[q], pts1[q], coef[q])
    return coef


@njit(cache=True, nogil=True)
def _inclusion(coef, box, lo, hi, clo, chi):
    """Outward-rounded hull of F over the 8 corners of ``box``.

    Corner values go to ``clo``/``chi`` (8 x 3, index 4*it + 2*iu + iv).
    """
    for c in range(3):
        lo[c] = np.inf
        hi[c] = -np.inf
    u0 = box[2]
    u1 = box[3]
    v0 = box[4]
    v1 = box[5]
    for it in range(2):
        t = box[it]
        for c in range(3):
            sl, sh = smul(t, coef[1, c, 0], coef[1, c, 1])
            gl, gh = iadd(coef[0, c, 0], coef[0, c, 1], sl, sh)
            sl, sh = smul(t, coef[3, c, 0], coef[3, c, 1])
            hl, hh = iadd(coef[2, c, 0], coef[2, c, 1], sl, sh)
            sl, sh = smul(t, coef[5, c, 0], coef[5, c, 1])
            kl, kh = iadd(coef[4, c, 0], coef[4, c, 1], sl, sh)
            a0l, a0h = smul(u0, hl, hh)
            a0l, a0h = iadd(gl, gh, a0l, a0h)
            a1l, a1h = smul(u1, hl, hh)
            a1l, a1h = iadd(gl, gh, a1l, a1h)
            b0l, b0h = smul(v0, kl, kh)
            b1l, b1h = smul(v1, kl, kh)
            base = 4 * it
            fl, fh = isub(a0l, a0h, b0l, b0h)
            clo[base, c] = fl
            chi[base, c] = fh
            fl, fh = isub(a0l, a0h, b1l, b1h)
            clo[base + 1, c] = fl
            chi[base + 1, c] = fh
            fl, fh = isub(a1l, a1h, b0l, b0h)
            clo[base + 2, c] = fl
            chi[base + 2, c] = fh
            fl, fh = isub(a1l, a1h, b1l, b1h)
            clo[base + 3, c] = fl
            chi[base + 3, c] = fh
            for ci in range(base, base + 4):
                if clo[ci, c] < lo[c]:
                    lo[c] = clo[ci, c]
                if chi[ci, c] > hi[c]:
                    hi[c] = chi[ci, c]


@njit(cache=True, nogil=True)
def _influence(clo, chi, dim):
    """Largest change of any F component across ``dim`` (0=t, 1=u, 2=v)."""
    step = 4 if dim == 0 else (2 if dim == 1 else 1)
    best = 0.0
    for ci in range(8):
        if ci & step:
            continue
        cj = ci + step
        for c in range(3):
            a = 0.5 * (clo[ci, c] + chi[ci, c])
            b = 0.5 * (clo[cj, c] + chi[cj, c])
            d = abs(b - a)
            if d > best:
                best = d
    return best


@njit(cache=True, nogil=True)
def _choose_split(box, clo, chi):
    """Splittable dimension with the largest influence, ties to t, then u, then v; -1 if none."""
    best = -1
    best_val = -1.0
    for d in range(3):
        lo_ = box[2 * d]
        hi_ = box[2 * d + 1]
        mid = 0.5 * (lo_ + hi_)
        if not (lo_ < mid < hi_):
            continue
        val = _influence(clo, chi, d)
        if val > best_val:
            best = d
            best_val = val
    return best


@njit(cache=True, nogil=True)
def _process_one(kind, coef, dsep, box, tstar, t_max, delta, no_zero,
                 lo, hi, clo, chi, left, right):
    """One interval step. Returns (outcome, time); children go to ``left``/``right``."""
    tlo = box[0]
    if tlo >= tstar or tlo > t_max:
        return PRUNED, 0.0
    if kind == 0 and box[2] + box[4] > 1.0:
        return PRUNED, 0.0  # outside the barycentric simplex
    _inclusion(coef, box, lo, hi, clo, chi)
    w = 0.0
    inside = True
    for c in range(3):
        if lo[c] > dsep or hi[c] < -dsep:
            return PRUNED, 0.0
        if hi[c] - lo[c] > w:
            w = hi[c] - lo[c]
        if lo[c] < -dsep or hi[c] > dsep:
            inside = False
    forced = no_zero and tlo == 0.0
    if (w < delta or inside) and not forced:
        return COLLISION, tlo
    d = _choose_split(box, clo, chi)
    if d < 0:
        if forced:
            return ZERO_STUCK, 0.0
        return COLLISION, tlo
    mid = 0.5 * (box[2 * d] + box[2 * d + 1])
    for x in range(6):
        left[x] = box[x]
        right[x] = box[x]
    left[2 * d + 1] = mid
    right[2 * d] = mid
    return SPLIT, tlo


@njit(cache=True, nogil=True)
def _process_range(kinds, coef, dsep, qid, boxes, start, end, tstar, t_max,
                   delta, no_zero):
    """Process queue entries [start, end). Returns (child_qid, child_boxes, hit_qid, hit_t, stuck_qid)."""
    n = end - start
    cq = np.empty(2 * n, np.int64)
    cb = np.empty((2 * n, 6), np.float64)
    hq = np.empty(n, np.int64)
    ht = np.empty(n, np.float64)
    sq = np.empty(n, np.int64)
    m = 0
    nh = 0
    ns = 0
    lo = np.empty(3)
    hi = np.empty(3)
    clo = np.empty((8, 3))
    chi = np.empty((8, 3))
    for e in range(start, end):
        q = qid[e]
        out, t = _process_one(kinds[q], coef[q], dsep[q], boxes[e], tstar[q], t_max,
                              delta, no_zero, lo, hi, clo, chi, cb[m], cb[m + 1])
        if out == SPLIT:
            cq[m] = q
            cq[m + 1] = q
            m += 2
        elif out == COLLISION:
            hq[nh] = q
            ht[nh] = t
            nh += 1
        elif out == ZERO_STUCK:
            sq[ns] = q
            ns += 1
    return cq[:m], cb[:m], hq[:nh], ht[:nh], sq[:ns]


@njit(cache=True, nogil=True)
def _end_round(cq, cb, hq, ht, sq, toi, splits, hit, stuck, max_splits, no_zero):
    """Fold a round's results into per-query state; returns the compacted next queue."""
    for i in range(hq.shape[0]):
        q = hq[i]
        if ht[i] < toi[q]:
            toi[q] = ht[i]
    for i in range(sq.shape[0]):
        q = sq[i]
        stuck[q] = True
        toi[q] = 0.0
    for i in range(0, cq.shape[0], 2):
        splits[cq[i]] += 1
    # queries over budget stop here with the earliest live time (zero-time
    # boxes keep going when no_zero is set)
    keep = np.ones(cq.shape[0], np.bool_)
    for i in range(cq.shape[0]):
        q = cq[i]
        if splits[q] > max_splits:
            t = cb[i, 0]
            if no_zero and t == 0.0:
                continue
            keep[i] = False
            if t < toi[q]:
                toi[q] = t
                hit[q] = True
    # drop children that can no longer improve their query
    for i in range(cq.shape[0]):
        if keep[i] and cb[i, 0] >= toi[cq[i]]:
            keep[i] = False
    n = 0
    for i in range(cq.shape[0]):
        if keep[i]:
            cq[n] = cq[i]
            for x in range(6):
                cb[n, x] = cb[i, x]
            n += 1
    return cq[:n], cb[:n]


@njit(cache=True, nogil=True)
def _narrow_serial(kinds, coef, dsep, qid, boxes, toi, splits, hit, stuck, t_max,
                   delta, max_splits, no_zero, capacity, trace):
    """Whole round loop in one call. Returns (rounds, peak_queue, processed, overflow, n_trace)."""
    rounds = 0
    peak = qid.shape[0]
    processed = 0
    nt = 0
    best = np.inf
    while qid.shape[0] > 0:
        rounds += 1
        processed += qid.shape[0]
        snapshot = toi.copy()
        cq, cb, hq, ht, sq = _process_range(kinds, coef, dsep, qid, boxes, 0,
                                            qid.shape[0], snapshot, t_max, delta, no_zero)
        qid, boxes = _end_round(cq, cb, hq, ht, sq, toi, splits, hit, stuck, max_splits, no_zero)
        cur = np.inf
        for i in range(toi.shape[0]):
            if toi[i] < cur:
                cur = toi[i]
        if cur < best:
            best = cur
            if nt < trace.shape[0]:
                trace[nt] = cur
                nt += 1
        if qid.shape[0] > peak:
            peak = qid.shape[0]
        if capacity >= 0 and qid.shape[0] > capacity:
            return rounds, peak, processed, True, nt
    return rounds, peak, processed, False, nt


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def _query_arrays(query: NarrowQuery):
    kind = int(query.kind)
    coef = np.empty((6, 3, 2))
    _coefficients(kind, np.ascontiguousarray(query.points_t0, dtype=np.float64),
                  np.ascontiguousarray(query.points_t1, dtype=np.float64), coef)
    return kind, coef


def inclusion_box(query: NarrowQuery, box: IntervalBox) -> tuple[np.ndarray, np.ndarray]:
    """Codomain box (lo, hi) guaranteed to contain F over ``box``, rounding included."""
    _, coef = _query_arrays(query)
    lo, hi = np.empty(3), np.empty(3)
    _inclusion(coef, box.as_array(), lo, hi, np.empty((8, 3)), np.empty((8, 3)))
    return lo, hi


def split(box: IntervalBox, dim: int = 0) -> tuple[IntervalBox, IntervalBox]:
    """Bisect ``box`` along ``dim`` (0=t, 1=u, 2=v)."""
    ivs = [box.t, box.u, box.v]
    iv = ivs[dim]
    mid = 0.5 * (iv.low + iv.high)
    if not iv.low < mid < iv.high:
        raise ValueError("interval is too narrow to split")
    left, right = list(ivs), list(ivs)
    left[dim] = Interval(iv.low, mid)
    right[dim] = Interval(mid, iv.high)
    return IntervalBox(box.query_id, *left), IntervalBox(box.query_id, *right)


def process_interval(box: IntervalBox, t_star: float, cfg: NarrowConfig, query: NarrowQuery,
                     min_separation: Optional[float] = None
                     ) -> tuple[float, list[IntervalBox]]:
    """Single step on one interval: returns (updated t_star, children)."""
    kind, coef = _query_arrays(query)
    d = cfg.min_separation if min_separation is None else min_separation
    if isinstance(d, str):
        raise ValueError("pass an explicit min_separation for 'relative' configs")
    left, right = np.empty(6), np.empty(6)
    out, t = _process_one(kind, coef, float(d), box.as_array(), t_star, cfg.t_max,
                          cfg.delta, cfg.no_zero_toi, np.empty(3), np.empty(3),
                          np.empty((8, 3)), np.empty((8, 3)), left, right)
    if out == COLLISION:
        return min(t_star, t), []
    if out == ZERO_STUCK:
        return 0.0, []
    if out == SPLIT:
        return t_star, [IntervalBox.from_array(box.query_id, left),
                        IntervalBox.from_array(box.query_id, right)]
    return t_star, []


def _separations(cfg: NarrowConfig, n: int, min_separation) -> np.ndarray:
    if min_separation is not None:
        d = np.broadcast_to(np.asarray(min_separation, dtype=np.float64), (n,))
    elif isinstance(cfg.min_separation, str):
        raise ValueError("'relative' separation needs per-query distances (see pipeline)")
    else:
        d = np.full(n, float(cfg.min_separation))
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("separation distances must be finite and >= 0")
    return np.ascontiguousarray(d, dtype=np.float64)


def narrow_phase(queries: Union[NarrowQueries, Sequence[NarrowQuery]], cfg: NarrowConfig,
                 threads: int = 1, min_separation=None, capacity: Optional[int] = None
                 ) -> NarrowOutcome:
    """Earliest conservative time of impact per query and over all queries.

    ``min_separation`` optionally overrides the config with a per-query array.
    ``capacity`` bounds the interval queue; exceeding it raises
    :class:`QueueOverflow` so the caller can re-run on fewer queries.
    """
    qs = as_queries(queries)
    n = len(qs)
    dsep = _separations(cfg, n, min_separation)
    toi = np.full(n, NO_COLLISION)
    hit = np.zeros(n, dtype=bool)
    stuck = np.zeros(n, dtype=bool)
    splits = np.zeros(n, dtype=np.int64)
    outcome = NarrowOutcome(toi, hit, stuck)
    if n == 0:
        return outcome
    if capacity is not None and n > capacity:
        raise QueueOverflow(f"{n} root intervals exceed queue capacity {capacity}")
    qid = np.arange(n, dtype=np.int64)
    boxes = np.tile(np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0]), (n, 1))
    cap = -1 if capacity is None else int(capacity)
    args = (qs.kinds, _all_coefficients(qs.kinds, qs.pts0, qs.pts1), dsep)

    if threads <= 1:
        trace = np.empty(4096)
        rounds, peak, processed, overflow, nt = _narrow_serial(
            *args, qid, boxes, toi, splits, hit, stuck, cfg.t_max, cfg.delta,
            cfg.max_splits, cfg.no_zero_toi, cap, trace)
        outcome.tstar_trace = [float(x) for x in trace[:nt]]
    else:
        rounds = processed = 0
        peak = n
        overflow = False
        best = NO_COLLISION
        while len(qid):
            rounds += 1
            processed += len(qid)
            snapshot = toi.copy()
            ranges = chunk_ranges(len(qid), 4 * threads)
            parts = run_chunks(
                lambda s, e: _process_range(*args, qid, boxes, s, e, snapshot, cfg.t_max,
                                            cfg.delta, cfg.no_zero_toi),
                ranges, threads)
            cq, cb, hq, ht, sq = (np.concatenate([p[i] for p in parts]) for i in range(5))
            qid, boxes = _end_round(cq, cb.reshape(-1, 6), hq, ht, sq, toi, splits, hit, stuck,
                                    cfg.max_splits, cfg.no_zero_toi)
            cur = float(toi.min())
            if cur < best:
                best = cur
                outcome.tstar_trace.append(cur)
            peak = max(peak, len(qid))
            if cap >= 0 and len(qid) > cap:
                overflow = True
                break
    outcome.rounds, outcome.peak_queue, outcome.intervals_processed = int(rounds), int(peak), int(processed)
    if overflow:
        raise QueueOverflow(f"interval queue exceeded capacity {cap}")
    return outcome
