"""Broad phase: Sweep and Tiniest Queue (STQ) plus brute-force and SAP references.

All three report the same thing: every pair of boxes that overlap on all three
axes (closed intervals, exact float comparisons), restricted to vertex-face and
edge-edge pairs whose primitives share no mesh vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

import numpy as np
from numba import njit

from ._parallel import chunk_ranges, run_chunks
from .geometry import BoxSet, PrimitiveId, PrimitiveKind, SceneStep

AXIS_NAMES = "xyz"
VF, EE = 0, 1


class CapacityOverflow(RuntimeError):
    """The candidate buffer of a broad-phase batch filled up."""


@dataclass(frozen=True, order=True)
class CandidatePair:
    left: PrimitiveId
    right: PrimitiveId

    def __post_init__(self):
        if self.left == self.right:
            raise ValueError("a candidate pair needs two distinct primitives")
        if self.right < self.left:
            a, b = self.right, self.left
            object.__setattr__(self, "left", a)
            object.__setattr__(self, "right", b)


@dataclass
class BroadStats:
    """Instrumentation filled in by the broad-phase routines."""

    axis: int = -1
    round_sizes: list[int] = field(default_factory=list)
    overflow: bool = False


class CandidateSet:
    """Candidate pairs as an ``(n, 2)`` array of box positions in canonical order."""

    def __init__(self, pairs: np.ndarray, boxes: BoxSet):
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.boxes = boxes

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[CandidatePair]:
        for a, b in self.pairs:
            yield CandidatePair(self.boxes.owner(int(a)), self.boxes.owner(int(b)))

    def __eq__(self, other) -> bool:
        if isinstance(other, CandidateSet):
            return np.array_equal(self.pairs, other.pairs)
        if isinstance(other, (set, frozenset)):
            return self.to_set() == other
        return NotImplemented

    def __repr__(self) -> str:
        return f"CandidateSet({len(self)} pairs)"

    def to_set(self) -> set[CandidatePair]:
        return set(self)

    @classmethod
    def concat(cls, parts: list["CandidateSet"], boxes: BoxSet) -> "CandidateSet":
        if not parts:
            return cls(np.empty((0, 2), np.int64), boxes)
        return cls(canonical_pairs(np.concatenate([p.pairs for p in parts]), boxes), boxes)


def owner_rank(boxes: BoxSet) -> np.ndarray:
    """Position of each box in (kind, index) order, ties by box position."""
    order = np.lexsort((np.arange(len(boxes)), boxes.index, boxes.kind))
    rank = np.empty(len(boxes), dtype=np.int64)
    rank[order] = np.arange(len(boxes))
    return rank


def canonical_pairs(pairs: np.ndarray, boxes: BoxSet) -> np.ndarray:
    """Orient each pair by owner rank and sort; duplicates are removed."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return pairs.copy()
    rank = owner_rank(boxes)
    ra, rb = rank[pairs[:, 0]], rank[pairs[:, 1]]
    swap = ra > rb
    out = pairs.copy()
    out[swap] = out[swap][:, ::-1]
    r = rank[out]
    order = np.lexsort((r[:, 1], r[:, 0]))
    out = out[order]
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.any(out[1:] != out[:-1], axis=1)
    return out[keep]


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _kinds_ok(a, b, kind):
    # vertex-face (0 + 2) or edge-edge (1 + 1)
    return kind[a] + kind[b] == 2


@njit(cache=True, nogil=True)
def _disjoint(a, b, verts):
    for x in range(3):
        va = verts[a, x]
        if va < 0:
            continue
        for y in range(3):
            if verts[b, y] == va:
                return False
    return True


@njit(cache=True, nogil=True)
def _grow(buf, n):
    out = np.empty((max(16, 2 * buf.shape[0]), 2), np.int64)
    out[:n] = buf[:n]
    return out


@njit(cache=True, nogil=True)
def _overlap_other(lo, hi, i, j, b, c):
    return (lo[i, b] <= hi[j, b] and lo[j, b] <= hi[i, b]
            and lo[i, c] <= hi[j, c] and lo[j, c] <= hi[i, c])


@njit(cache=True, nogil=True)
def _stq_kernel(lo, hi, ids, kind, verts, axis, start, end, capacity):
    """STQ over sorted boxes for queue seeds ``start <= i < end``.

    ``lo``/``hi``/``kind``/``verts`` are in sorted order; emitted pairs are
    mapped back through ``ids``. Returns (pairs, count, overflow, round_sizes).
    """
    k = lo.shape[0]
    b = (axis + 1) % 3
    c = (axis + 2) % 3
    qi = np.empty(max(0, end - start), np.int64)
    qj = np.empty(max(0, end - start), np.int64)
    nq = 0
    for i in range(start, end):
        if i + 1 < k and lo[i + 1, axis] <= hi[i, axis]:
            qi[nq] = i
            qj[nq] = i + 1
            nq += 1
    out = np.empty((64, 2), np.int64)
    n = 0
    rounds = np.zeros(16, np.int64)
    nr = 0
    overflow = False
    while nq > 0 and not overflow:
        if nr == rounds.shape[0]:
            tmp = np.zeros(2 * nr, np.int64)
            tmp[:nr] = rounds
            rounds = tmp
        rounds[nr] = nq
        nr += 1
        m = 0
        for q in range(nq):
            i = qi[q]
            j = qj[q]
            if (_kinds_ok(i, j, kind) and _overlap_other(lo, hi, i, j, b, c)
                    and _disjoint(i, j, verts)):
                if capacity >= 0 and n >= capacity:
                    overflow = True
                    break
                if n == out.shape[0]:
                    out = _grow(out, n)
                out[n, 0] = ids[i]
                out[n, 1] = ids[j]
                n += 1
            # in-place compaction is safe: m <= q
            if j + 1 < k and lo[j + 1, axis] <= hi[i, axis]:
                qi[m] = i
                qj[m] = j + 1
                m += 1
        nq = m
    return out[:n], n, overflow, rounds[:nr]


@njit(cache=True, nogil=True)
def _sap_kernel(lo, hi, ids, kind, verts, axis, start, end):
    k = lo.shape[0]
    b = (axis + 1) % 3
    c = (axis + 2) % 3
    out = np.empty((64, 2), np.int64)
    n = 0
    for i in range(start, end):
        j = i + 1
        while j < k and lo[j, axis] <= hi[i, axis]:
            if (_kinds_ok(i, j, kind) and _overlap_other(lo, hi, i, j, b, c)
                    and _disjoint(i, j, verts)):
                if n == out.shape[0]:
                    out = _grow(out, n)
                out[n, 0] = ids[i]
                out[n, 1] = ids[j]
                n += 1
            j += 1
    return out[:n]


@njit(cache=True, nogil=True)
def _bf_kernel(lo, hi, kind, verts, start, end):
    k = lo.shape[0]
    out = np.empty((64, 2), np.int64)
    n = 0
    for i in range(start, end):
        for j in range(i + 1, k):
            if (_kinds_ok(i, j, kind) and lo[i, 0] <= hi[j, 0] and lo[j, 0] <= hi[i, 0]
                    and lo[i, 1] <= hi[j, 1] and lo[j, 1] <= hi[i, 1]
                    and lo[i, 2] <= hi[j, 2] and lo[j, 2] <= hi[i, 2]
                    and _disjoint(i, j, verts)):
                if n == out.shape[0]:
                    out = _grow(out, n)
                out[n, 0] = i
                out[n, 1] = j
                n += 1
    return out[:n]


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def choose_axis(boxes: BoxSet) -> int:
    """Axis (0=x, 1=y, 2=z) of largest variance of box centers; ties go to the lower axis."""
    if len(boxes) == 0:
        raise ValueError("choose_axis needs at least one box")
    centers = (boxes.lo.astype(np.float64) + boxes.hi.astype(np.float64)) / 2.0
    return int(np.argmax(centers.var(axis=0)))


@dataclass
class SortedBoxes:
    """Boxes permuted into sweep order along one axis."""

    axis: int
    order: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    kind: np.ndarray
    verts: np.ndarray

    @classmethod
    def build(cls, boxes: BoxSet, axis: Optional[int] = None) -> "SortedBoxes":
        if axis is None:
            axis = choose_axis(boxes)
        # equal min coordinates are ordered by (kind, index)
        order = np.lexsort((np.arange(len(boxes)), boxes.index, boxes.kind, boxes.lo[:, axis]))
        return cls(axis, order, np.ascontiguousarray(boxes.lo[order]),
                   np.ascontiguousarray(boxes.hi[order]),
                   np.ascontiguousarray(boxes.kind[order]),
                   np.ascontiguousarray(boxes.verts[order]))

    def __len__(self) -> int:
        return len(self.order)


def stq_range(sb: SortedBoxes, start: int, end: int, capacity: int = -1):
    """STQ restricted to queue seeds in ``[start, end)``; returns (pairs, overflow, round_sizes)."""
    pairs, _, overflow, rounds = _stq_kernel(sb.lo, sb.hi, sb.order, sb.kind, sb.verts,
                                             sb.axis, start, end, capacity)
    return pairs, overflow, rounds


def _sum_rounds(parts) -> list[int]:
    width = max((len(r) for r in parts), default=0)
    total = np.zeros(width, np.int64)
    for r in parts:
        total[:len(r)] += r
    return [int(x) for x in total]


def stq(boxes: BoxSet, threads: int = 1, stats: Optional[BroadStats] = None,
        sorted_boxes: Optional[SortedBoxes] = None) -> CandidateSet:
    """Sweep and Tiniest Queue broad phase.

    Boxes are sorted by their minimum along the axis of largest center
    variance; the queue starts with overlapping neighbours and every queued
    pair (i, j) pushes (i, j+1) while that pair still overlaps on the sweep
    axis. The seed range is split across ``threads`` workers.
    """
    k = len(boxes)
    if k < 2:
        if stats is not None:
            stats.axis = choose_axis(boxes) if k else -1
        return CandidateSet(np.empty((0, 2), np.int64), boxes)
    sb = sorted_boxes or SortedBoxes.build(boxes)
    ranges = chunk_ranges(k - 1, 4 * threads if threads > 1 else 1)
    results = run_chunks(lambda s, e: stq_range(sb, s, e), ranges, threads)
    if stats is not None:
        stats.axis = sb.axis
        stats.round_sizes = _sum_rounds([r[2] for r in results])
    pairs = np.concatenate([r[0] for r in results])
    return CandidateSet(canonical_pairs(pairs, boxes), boxes)


def sap(boxes: BoxSet, threads: int = 1, stats: Optional[BroadStats] = None) -> CandidateSet:
    """Reference sweep and prune: for each box, scan forward while the sweep axis overlaps."""
    k = len(boxes)
    if k < 2:
        return CandidateSet(np.empty((0, 2), np.int64), boxes)
    sb = SortedBoxes.build(boxes)
    if stats is not None:
        stats.axis = sb.axis
    ranges = chunk_ranges(k - 1, 4 * threads if threads > 1 else 1)
    parts = run_chunks(lambda s, e: _sap_kernel(sb.lo, sb.hi, sb.order, sb.kind, sb.verts,
                                                sb.axis, s, e), ranges, threads)
    return CandidateSet(canonical_pairs(np.concatenate(parts), boxes), boxes)


def bf(boxes: BoxSet, threads: int = 1, stats: Optional[BroadStats] = None) -> CandidateSet:
    """All-pairs overlap test; the broad-phase oracle."""
    k = len(boxes)
    if k < 2:
        return CandidateSet(np.empty((0, 2), np.int64), boxes)
    # balance the triangular loop: row i costs k - i
    parts_n = 4 * threads if threads > 1 else 1
    cum = np.cumsum(np.arange(k - 1, 0, -1))
    cuts = np.searchsorted(cum, cum[-1] * np.arange(1, parts_n) / parts_n) + 1
    bounds = np.unique(np.concatenate([[0], cuts, [k - 1]]))
    ranges = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if a < b]
    parts = run_chunks(lambda s, e: _bf_kernel(boxes.lo, boxes.hi, boxes.kind, boxes.verts, s, e),
                       ranges, threads)
    return CandidateSet(canonical_pairs(np.concatenate(parts), boxes), boxes)


BROAD_PHASES = {"stq": stq, "bf": bf, "sap": sap}


# ---------------------------------------------------------------------------
# Narrow-phase query construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NarrowQuery:
    """One vertex-face (p, t0, t1, t2) or edge-edge (p0, p1, p2, p3) query."""

    kind: int
    points_t0: np.ndarray
    points_t1: np.ndarray
    source: Optional[CandidatePair] = None

    @property
    def is_vertex_face(self) -> bool:
        return self.kind == VF


class NarrowQueries:
    """A batch of narrow-phase queries stored as arrays.

    ``pts0``/``pts1`` have shape (n, 4, 3); ``sources`` holds the primitive
    ids as (left_kind, left_index, right_kind, right_index) rows.
    """

    def __init__(self, kinds, pts0, pts1, sources=None):
        self.kinds = np.ascontiguousarray(kinds, dtype=np.int8).reshape(-1)
        n = len(self.kinds)
        self.pts0 = np.ascontiguousarray(pts0, dtype=np.float64).reshape(n, 4, 3)
        self.pts1 = np.ascontiguousarray(pts1, dtype=np.float64).reshape(n, 4, 3)
        if sources is None:
            sources = np.full((n, 4), -1, np.int64)
        self.sources = np.ascontiguousarray(sources, dtype=np.int64).reshape(n, 4)

    def __len__(self) -> int:
        return len(self.kinds)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray, list)):
            return NarrowQueries(self.kinds[i], self.pts0[i], self.pts1[i], self.sources[i])
        src = None
        if self.sources[i, 0] >= 0:
            s = self.sources[i]
            src = CandidatePair(PrimitiveId(PrimitiveKind(int(s[0])), int(s[1])),
                                PrimitiveId(PrimitiveKind(int(s[2])), int(s[3])))
        return NarrowQuery(int(self.kinds[i]), self.pts0[i].copy(), self.pts1[i].copy(), src)

    def __iter__(self) -> Iterator[NarrowQuery]:
        for i in range(len(self)):
            yield self[i]

    @property
    def nbytes(self) -> int:
        return self.kinds.nbytes + self.pts0.nbytes + self.pts1.nbytes + self.sources.nbytes

    @classmethod
    def from_list(cls, queries: Iterable[NarrowQuery]) -> "NarrowQueries":
        qs = list(queries)
        if not qs:
            return cls.empty()
        sources = []
        for q in qs:
            if q.source is None:
                sources.append((-1, -1, -1, -1))
            else:
                sources.append((int(q.source.left.kind), q.source.left.index,
                                int(q.source.right.kind), q.source.right.index))
        return cls([q.kind for q in qs], [q.points_t0 for q in qs],
                   [q.points_t1 for q in qs], sources)

    @classmethod
    def empty(cls) -> "NarrowQueries":
        return cls(np.empty(0, np.int8), np.empty((0, 4, 3)), np.empty((0, 4, 3)))

    @classmethod
    def concat(cls, parts: list["NarrowQueries"]) -> "NarrowQueries":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.kinds for p in parts]),
                   np.concatenate([p.pts0 for p in parts]),
                   np.concatenate([p.pts1 for p in parts]),
                   np.concatenate([p.sources for p in parts]))


def as_queries(queries) -> NarrowQueries:
    if isinstance(queries, NarrowQueries):
        return queries
    return NarrowQueries.from_list(queries)


def _pairs_as_ids(pairs) -> np.ndarray:
    """(left_kind, left_index, right_kind, right_index) rows, canonically oriented."""
    if isinstance(pairs, CandidateSet):
        b = pairs.boxes
        p = pairs.pairs
        return np.stack([b.kind[p[:, 0]], b.index[p[:, 0]],
                         b.kind[p[:, 1]], b.index[p[:, 1]]], axis=1).astype(np.int64).reshape(-1, 4)
    rows = sorted(pairs)
    return np.array([(int(c.left.kind), c.left.index, int(c.right.kind), c.right.index)
                     for c in rows], dtype=np.int64).reshape(-1, 4)


def classify(pairs: Union[CandidateSet, Iterable[CandidatePair]], scene: SceneStep
             ) -> tuple[NarrowQueries, NarrowQueries]:
    """Turn candidate pairs into vertex-face and edge-edge narrow-phase queries.

    Other kind combinations and pairs sharing a mesh vertex are dropped.
    """
    ids = _pairs_as_ids(pairs)
    lk, li, rk, ri = ids.T
    sizes = {int(PrimitiveKind.VERTEX): scene.num_vertices,
             int(PrimitiveKind.EDGE): len(scene.edges),
             int(PrimitiveKind.FACE): len(scene.faces)}
    for kk, ii in ((lk, li), (rk, ri)):
        for kind, size in sizes.items():
            sel = ii[kk == kind]
            if sel.size and (sel.min() < 0 or sel.max() >= size):
                raise IndexError(f"{PrimitiveKind(kind).name.lower()} index out of range")

    V, E, F = int(PrimitiveKind.VERTEX), int(PrimitiveKind.EDGE), int(PrimitiveKind.FACE)
    # vertex-face, in either orientation
    vf_fwd = (lk == V) & (rk == F)
    vf_rev = (lk == F) & (rk == V)
    vtx = np.concatenate([li[vf_fwd], ri[vf_rev]])
    face = np.concatenate([ri[vf_fwd], li[vf_rev]])
    vf_src = np.concatenate([ids[vf_fwd], ids[vf_rev][:, [2, 3, 0, 1]]])
    vf_idx = np.concatenate([vtx[:, None], scene.faces[face]], axis=1).reshape(-1, 4)
    keep = ~np.any(vf_idx[:, 1:] == vf_idx[:, :1], axis=1)
    vf_idx, vf_src = vf_idx[keep], vf_src[keep]

    ee = (lk == E) & (rk == E) & (li != ri)
    ee_idx = np.concatenate([scene.edges[li[ee]], scene.edges[ri[ee]]], axis=1).reshape(-1, 4)
    ee_src = ids[ee]
    shared = np.zeros(len(ee_idx), dtype=bool)
    for x in (0, 1):
        for y in (2, 3):
            shared |= ee_idx[:, x] == ee_idx[:, y]
    ee_idx, ee_src = ee_idx[~shared], ee_src[~shared]

    def gather(idx, kind, src):
        return NarrowQueries(np.full(len(idx), kind, np.int8),
                             scene.vertices_t0[idx], scene.vertices_t1[idx], src)

    return gather(vf_idx, VF, vf_src), gather(ee_idx, EE, ee_src)
