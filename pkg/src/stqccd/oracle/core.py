"""Independent ground truth for vertex-face and edge-edge queries.

Every input coordinate is a binary float, hence an exact rational. The
residual F(t, u, v) = G(t) + u H(t) - v K(t) vanishes only where
det[G, H, K](t) = 0, a polynomial of degree <= 3 with exact rational
coefficients. Its real roots in [0, 1] are isolated with Sturm sequences and
refined by exact bisection; at each root the barycentric / segment
parameters are signs of further polynomials, decided exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from ..broadphase import EE, VF, CandidatePair, NarrowQuery
from ..geometry import PrimitiveId, PrimitiveKind, SceneStep, swept_extent
from . import poly as P

COLLIDING = "colliding"
NOT_COLLIDING = "not_colliding"
INDETERMINATE = "indeterminate"

#: refinement cap (bits) when deciding signs at an irrational root
MAX_PRECISION = 4096


@dataclass(frozen=True)
class OracleVerdict:
    status: str
    root_lo: Optional[Fraction] = None
    root_hi: Optional[Fraction] = None
    margin: Optional[float] = None
    reason: str = ""

    @property
    def colliding(self) -> bool:
        return self.status == COLLIDING

    @property
    def indeterminate(self) -> bool:
        return self.status == INDETERMINATE

    @property
    def earliest_root_bounds(self) -> Optional[tuple[float, float]]:
        """Float bounds rounded outward from the exact dyadic bounds."""
        if self.root_lo is None:
            return None
        return _float_down(self.root_lo), _float_up(self.root_hi)

    def to_json(self, query_hash: str = "") -> dict:
        return {
            "query": query_hash,
            "verdict": self.status,
            "root_lo": None if self.root_lo is None else _decimal(self.root_lo),
            "root_hi": None if self.root_hi is None else _decimal(self.root_hi),
            "margin": None if self.margin is None else repr(self.margin),
            "reason": self.reason,
        }

    @classmethod
    def from_json(cls, d: dict) -> "OracleVerdict":
        return cls(d["verdict"],
                   None if d["root_lo"] is None else Fraction(d["root_lo"]),
                   None if d["root_hi"] is None else Fraction(d["root_hi"]),
                   None if d["margin"] is None else float(d["margin"]),
                   d.get("reason", ""))


def _float_down(x: Fraction) -> float:
    f = float(x)
    return f if Fraction(f) <= x else math.nextafter(f, -math.inf)


def _float_up(x: Fraction) -> float:
    f = float(x)
    return f if Fraction(f) >= x else math.nextafter(f, math.inf)


def _decimal(x: Fraction) -> str:
    """Exact decimal expansion of a dyadic rational."""
    num, den = x.numerator, x.denominator
    k = den.bit_length() - 1
    if den != 1 << k:
        raise ValueError("not a dyadic rational")
    sign = "-" if num < 0 else ""
    scaled = str(abs(num) * 5 ** k).rjust(k + 1, "0")
    if k == 0:
        return sign + scaled
    return f"{sign}{scaled[:-k]}.{scaled[-k:]}"


def query_hash(query: NarrowQuery) -> str:
    h = hashlib.sha256()
    h.update(bytes([int(query.kind)]))
    h.update(np.ascontiguousarray(query.points_t0, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(query.points_t1, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Exact polynomial set-up
# ---------------------------------------------------------------------------

def _common_scale(query: NarrowQuery) -> int:
    """Smallest s such that every coordinate times 2**s is an integer."""
    s = 0
    for x in np.concatenate([np.ravel(query.points_t0), np.ravel(query.points_t1)]).tolist():
        s = max(s, x.as_integer_ratio()[1].bit_length() - 1)
    return s


def _scaled_int(x: float, scale: int) -> int:
    num, den = x.as_integer_ratio()
    return (num << scale) // den  # exact: den divides 2**scale


def _vec_poly(a0, a1, scale: int):
    """Integer linear polynomials 2**scale * (a0 + t (a1 - a0)), one per component."""
    out = []
    for x0, x1 in zip(a0, a1):
        i0 = _scaled_int(float(x0), scale)
        i1 = _scaled_int(float(x1), scale)
        out.append(P.trim([i0, i1 - i0]))
    return out


def _vsub(a, b):
    return [P.sub(x, y) for x, y in zip(a, b)]


def _cross(a, b):
    return [P.sub(P.mul(a[1], b[2]), P.mul(a[2], b[1])),
            P.sub(P.mul(a[2], b[0]), P.mul(a[0], b[2])),
            P.sub(P.mul(a[0], b[1]), P.mul(a[1], b[0]))]


def _dot(a, b):
    out = []
    for x, y in zip(a, b):
        out = P.add(out, P.mul(x, y))
    return out


def residual_terms(query: NarrowQuery):
    """Exact (G, H, K) with F = G + u H - v K, each a 3-vector of linear polys in t.

    Coefficients are integers: every coordinate is scaled by a common power
    of two, which changes no sign and no root.
    """
    scale = _common_scale(query)
    pts = [_vec_poly(query.points_t0[i], query.points_t1[i], scale) for i in range(4)]
    if query.kind == VF:
        p, a, b, c = pts
        return _vsub(p, a), _vsub(a, b), _vsub(c, a)
    p0, p1, p2, p3 = pts
    return _vsub(p0, p2), _vsub(p1, p0), _vsub(p3, p2)


def coplanarity_polynomial(query: NarrowQuery) -> P.Poly:
    G, H, K = residual_terms(query)
    return _dot(G, _cross(H, K))


# ---------------------------------------------------------------------------
# Root isolation on [0, 1]
# ---------------------------------------------------------------------------

@dataclass
class _Root:
    lo: Fraction
    hi: Fraction

    @property
    def exact(self) -> bool:
        return self.lo == self.hi


def isolate_roots(p: P.Poly, precision: int) -> list[_Root]:
    """Distinct roots of a non-zero polynomial in [0, 1], increasing, each
    bracketed to width <= 2**-precision (exact when hit exactly)."""
    return _isolate(p, precision)[0]


def _isolate(p: P.Poly, precision: int) -> tuple[list[_Root], P.Poly]:
    """Roots as in :func:`isolate_roots` plus the square-free part they refer to."""
    if P.degree(p) <= 0:
        return [], p
    if P.bernstein_signs(P.integer_form(p)) in ({1}, {-1}):
        return [], p  # one strict sign over [0, 1]
    q = P.square_free(p)
    seq = P.sturm_sequence(q)
    zero, one = Fraction(0), Fraction(1)
    roots: list[_Root] = []
    if P.evaluate(q, zero) == 0:
        roots.append(_Root(zero, zero))
    stack = [(zero, one, P.count_roots(seq, zero, one))]
    brackets = []
    while stack:
        a, b, n = stack.pop()
        if n == 0:
            continue
        if n == 1:
            brackets.append((a, b))
            continue
        m = (a + b) / 2
        left = P.count_roots(seq, a, m)
        stack.append((m, b, n - left))
        stack.append((a, m, left))
    width = Fraction(1, 1 << precision)
    for a, b in brackets:
        roots.append(_refine(q, a, b, width))
    roots.sort(key=lambda r: r.lo)
    return roots, q


def _refine(q: P.Poly, a: Fraction, b: Fraction, width: Fraction) -> _Root:
    """Bisect a bracket (a, b] holding exactly one simple root of q.

    Endpoints stay dyadic, so signs are evaluated on an integer multiple of q.
    """
    iq = P.integer_form(q)
    k = max(a.denominator, b.denominator).bit_length() - 1
    ma = a.numerator * ((1 << k) // a.denominator)
    mb = b.numerator * ((1 << k) // b.denominator)
    target = width.denominator.bit_length() - 1
    sb = P.sign_at_dyadic(iq, mb, k)
    if sb == 0:
        return _Root(b, b)
    # bracket is [ma, mb] / 2**k; stop once its width is <= 2**-target
    while (mb - ma) << target > 1 << k:
        if (mb - ma) & 1:
            ma, mb, k = 2 * ma, 2 * mb, k + 1
        mid = (ma + mb) // 2
        sm = P.sign_at_dyadic(iq, mid, k)
        if sm == 0:
            return _Root(Fraction(mid, 1 << k), Fraction(mid, 1 << k))
        if sm == sb:
            mb = mid
        else:
            ma = mid
    return _Root(Fraction(ma, 1 << k), Fraction(mb, 1 << k))


class _SignDecider:
    """Exact sign of polynomials at one root of the square-free ``q``."""

    def __init__(self, q: P.Poly, root: _Root):
        self.q = q
        self.root = root
        self.iq = P.integer_form(q)

    def sign(self, s: P.Poly) -> Optional[int]:
        r = self.root
        if not s:
            return 0
        if r.exact:
            return P.sign(P.evaluate(s, r.lo))
        ip = P.integer_form(s)
        k = max(r.lo.denominator, r.hi.denominator).bit_length() - 1
        ma = r.lo.numerator * ((1 << k) // r.lo.denominator)
        mb = r.hi.numerator * ((1 << k) // r.hi.denominator)
        got = P.range_sign_dyadic(ip, ma, mb, k)
        if got:
            return got
        g = P.gcd(s, self.q)
        if P.degree(g) >= 1:
            # r is the only root of q in (lo, hi] and a simple one, so g
            # vanishes at r exactly when it changes sign across the bracket
            if P.sign(P.evaluate(g, r.lo)) * P.sign(P.evaluate(g, r.hi)) < 0:
                return 0
        sq_hi = P.sign_at_dyadic(self.iq, mb, k)
        bits = max(1, (r.hi - r.lo).denominator.bit_length())
        while bits <= MAX_PRECISION:
            ma, mb, k = 2 * ma, 2 * mb, k + 1
            mid = (ma + mb) // 2
            sm = P.sign_at_dyadic(self.iq, mid, k)
            if sm == 0:
                return P.sign_at_dyadic(ip, mid, k)
            if sm == sq_hi:
                mb = mid
            else:
                ma = mid
            bits += 1
            got = P.range_sign_dyadic(ip, ma, mb, k)
            if got:
                return got
        return None


def _inside(kind: int, decide: _SignDecider, nu, nv, den) -> Optional[bool]:
    """Whether the parameters at the root lie in the query domain (None: undecided)."""
    conditions = [nu, nv]
    if kind == VF:
        conditions.append(P.sub(P.sub(den, nu), nv))
    else:
        conditions += [P.sub(den, nu), P.sub(den, nv)]
    undecided = False
    for c in conditions:
        s = decide.sign(c)
        if s is None:
            undecided = True
        elif s < 0:
            return False
    return None if undecided else True


def oracle_toi(query: NarrowQuery, precision: int = 128, margin: bool = True,
               margin_target: Optional[float] = None) -> OracleVerdict:
    """Exact collision verdict and earliest-root bracket for one query.

    ``precision`` is the bracket width exponent (bits, >= 128). With
    ``margin`` a certified lower bound on min |F|_inf over the domain is
    attached to non-colliding verdicts.
    """
    if precision < 128:
        raise ValueError("precision must be at least 128 bits")
    if not (np.all(np.isfinite(query.points_t0)) and np.all(np.isfinite(query.points_t1))):
        raise ValueError("query coordinates must be finite")
    G, H, K = residual_terms(query)
    n = _cross(H, K)
    poly = _dot(G, n)
    if not poly:
        return OracleVerdict(INDETERMINATE, reason="coplanar for all t")
    roots, q = _isolate(poly, precision)
    if roots:
        nu = _dot(n, _cross(K, G))
        nv = _dot(n, _cross(H, G))
        den = _dot(n, n)
    undecided = False
    for root in roots:
        decide = _SignDecider(q, root)
        if decide.sign(den) == 0:
            undecided = True  # degenerate triangle / parallel edges at the root
            continue
        inside = _inside(query.kind, decide, nu, nv, den)
        if inside is None:
            undecided = True
        elif inside:
            if undecided:
                return OracleVerdict(INDETERMINATE, reason="undecided earlier root")
            return OracleVerdict(COLLIDING, root.lo, root.hi)
    if undecided:
        return OracleVerdict(INDETERMINATE, reason="degenerate parameters at a root")
    m = separation_margin(query, target=margin_target) if margin else None
    return OracleVerdict(NOT_COLLIDING, margin=m)


# ---------------------------------------------------------------------------
# Certified margin for root-free queries
# ---------------------------------------------------------------------------

def _iv_add(a, b):
    lo = a[0] + b[0]
    hi = a[1] + b[1]
    return np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)


def _iv_neg(a):
    return -a[1], -a[0]


def _iv_scale(s, a):
    """Non-negative scalar array times interval."""
    return np.nextafter(s * a[0], -np.inf), np.nextafter(s * a[1], np.inf)


def _point_at(x0, x1, t):
    # (1 - t) x0 + t x1, with 1 - t itself rounded
    one_minus = (np.nextafter(1.0 - t, -np.inf), np.nextafter(1.0 - t, np.inf))
    a = (np.minimum(one_minus[0] * x0, one_minus[1] * x0),
         np.maximum(one_minus[0] * x0, one_minus[1] * x0))
    a = (np.nextafter(a[0], -np.inf), np.nextafter(a[1], np.inf))
    b = (np.nextafter(t * x1, -np.inf), np.nextafter(t * x1, np.inf))
    return _iv_add(a, b)


def _residual_hull(query: NarrowQuery, boxes: np.ndarray):
    """Enclosure (lo, hi), shape (m, 3), of F over each (t, u, v) box."""
    P0, P1 = np.asarray(query.points_t0), np.asarray(query.points_t1)
    m = len(boxes)
    lo = np.full((m, 3), np.inf)
    hi = np.full((m, 3), -np.inf)
    for it in (0, 1):
        t = boxes[:, it][:, None]
        pts = [_point_at(P0[k][None, :], P1[k][None, :], t) for k in range(4)]
        for iu in (2, 3):
            u = boxes[:, iu][:, None]
            for iv in (4, 5):
                v = boxes[:, iv][:, None]
                if query.kind == VF:
                    # p - ((1 - u - v) a + u b + v c) = (p - a) - u (b - a) - v (c - a)
                    p, a, b, c = pts
                    f = _iv_add(p, _iv_neg(a))
                    f = _iv_add(f, _iv_neg(_iv_scale(u, _iv_add(b, _iv_neg(a)))))
                    f = _iv_add(f, _iv_neg(_iv_scale(v, _iv_add(c, _iv_neg(a)))))
                else:
                    p0, p1, p2, p3 = pts
                    ea = _iv_add(p0, _iv_scale(u, _iv_add(p1, _iv_neg(p0))))
                    eb = _iv_add(p2, _iv_scale(v, _iv_add(p3, _iv_neg(p2))))
                    f = _iv_add(ea, _iv_neg(eb))
                lo = np.minimum(lo, f[0])
                hi = np.maximum(hi, f[1])
    return lo, hi


def separation_margin(query: NarrowQuery, target: Optional[float] = None,
                      max_boxes: int = 200_000) -> float:
    """Certified lower bound on min |F|_inf over the query domain.

    Branch and bound over (t, u, v) boxes. Stops once the bound reaches
    ``target`` or half of the smallest sampled |F|, or at ``max_boxes``.
    """
    boxes = np.array([[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]])
    settled = math.inf
    best_sample = math.inf
    evaluated = 0
    while len(boxes):
        if query.kind == VF:
            boxes = boxes[boxes[:, 2] + boxes[:, 4] <= 1.0]
            if not len(boxes):
                break
        lo, hi = _residual_hull(query, boxes)
        evaluated += len(boxes)
        lb = np.max(np.maximum(np.maximum(lo, -hi), 0.0), axis=1)
        mid = 0.5 * (lo + hi)
        best_sample = min(best_sample, float(np.min(np.max(np.abs(mid), axis=1))))
        goal = 0.5 * best_sample
        if target is not None:
            goal = min(goal, target)
        done = lb >= goal
        if np.any(done):
            settled = min(settled, float(lb[done].min()))
        boxes = boxes[~done]
        if evaluated >= max_boxes and len(boxes):
            lo_rest = float(lb[~done].min())
            return min(settled, lo_rest)
        # bisect every open box along its widest parameter
        widths = boxes[:, 1::2] - boxes[:, 0::2]
        dim = np.argmax(widths, axis=1)
        left = boxes.copy()
        right = boxes.copy()
        rows = np.arange(len(boxes))
        mids = 0.5 * (boxes[rows, 2 * dim] + boxes[rows, 2 * dim + 1])
        left[rows, 2 * dim + 1] = mids
        right[rows, 2 * dim] = mids
        boxes = np.concatenate([left, right])
    return settled if math.isfinite(settled) else 0.0


# ---------------------------------------------------------------------------
# Scene-level ground truth
# ---------------------------------------------------------------------------

@dataclass
class GroundTruth:
    colliding: set[CandidatePair]
    indeterminate: set[CandidatePair]
    verdicts: dict[CandidatePair, OracleVerdict]
    pairs_checked: int

    def to_json(self) -> list[dict]:
        rows = []
        for pair in sorted(self.verdicts):
            row = self.verdicts[pair].to_json()
            row["pair"] = [repr(pair.left), repr(pair.right)]
            rows.append(row)
        return rows


def _overlapping(lo_a, hi_a, lo_b, hi_b, chunk=2048):
    """Index pairs (i, j) whose closed double-precision boxes overlap."""
    out = []
    for s in range(0, len(lo_a), chunk):
        la, ha = lo_a[s:s + chunk, None, :], hi_a[s:s + chunk, None, :]
        hit = np.all((la <= hi_b[None]) & (lo_b[None] <= ha), axis=2)
        i, j = np.nonzero(hit)
        out.append(np.stack([i + s, j], axis=1))
    return np.concatenate(out) if out else np.empty((0, 2), np.int64)


def candidate_primitive_pairs(scene: SceneStep) -> list[tuple[int, int, int]]:
    """All non-adjacent (kind, i, j) VF/EE pairs whose swept extents overlap.

    Linear motion keeps a primitive inside the hull of its endpoint
    positions, so pairs with disjoint exact extents cannot touch.
    """
    lo, hi = swept_extent(scene)
    nv, ne = scene.num_vertices, len(scene.edges)
    vlo, vhi = lo[:nv], hi[:nv]
    elo, ehi = lo[nv:nv + ne], hi[nv:nv + ne]
    flo, fhi = lo[nv + ne:], hi[nv + ne:]
    out = []
    for v, f in _overlapping(vlo, vhi, flo, fhi):
        if v not in scene.faces[f]:
            out.append((VF, int(v), int(f)))
    for a, b in _overlapping(elo, ehi, elo, ehi):
        if a < b and not set(scene.edges[a]) & set(scene.edges[b]):
            out.append((EE, int(a), int(b)))
    return out


def query_for_pair(scene: SceneStep, kind: int, i: int, j: int) -> NarrowQuery:
    if kind == VF:
        idx = [i, *scene.faces[j]]
        src = CandidatePair(PrimitiveId(PrimitiveKind.VERTEX, i), PrimitiveId(PrimitiveKind.FACE, j))
    else:
        idx = [*scene.edges[i], *scene.edges[j]]
        src = CandidatePair(PrimitiveId(PrimitiveKind.EDGE, i), PrimitiveId(PrimitiveKind.EDGE, j))
    return NarrowQuery(kind, scene.vertices_t0[idx], scene.vertices_t1[idx], src)


def ground_truth_pairs(scene: SceneStep, precision: int = 128) -> GroundTruth:
    """Oracle verdicts for every non-adjacent vertex-face and edge-edge pair."""
    colliding, indeterminate, verdicts = set(), set(), {}
    pairs = candidate_primitive_pairs(scene)
    for kind, i, j in pairs:
        q = query_for_pair(scene, kind, i, j)
        v = oracle_toi(q, precision, margin=False)
        if v.status == NOT_COLLIDING:
            continue
        verdicts[q.source] = v
        (colliding if v.colliding else indeterminate).add(q.source)
    return GroundTruth(colliding, indeterminate, verdicts, len(pairs))


def dump_verdicts(queries: Iterable[NarrowQuery], verdicts: Iterable[OracleVerdict], path) -> None:
    rows = [v.to_json(query_hash(q)) for q, v in zip(queries, verdicts)]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)


def load_verdicts(path) -> dict[str, OracleVerdict]:
    with open(path) as fh:
        return {row["query"]: OracleVerdict.from_json(row) for row in json.load(fh)}
