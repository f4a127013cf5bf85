"""Double-precision distances between primitives at a fixed time (batched)."""

from __future__ import annotations

import numpy as np

from .broadphase import VF, NarrowQueries


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def point_segment(p, a, b):
    """Distance from points ``p`` to segments ``ab``; arrays of shape (..., 3)."""
    ab = b - a
    den = _dot(ab, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(den > 0, _dot(p - a, ab) / np.where(den > 0, den, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    return np.linalg.norm(p - (a + s[..., None] * ab), axis=-1)


def point_triangle(p, a, b, c):
    """Distance from points to triangles (degenerate triangles fall back to edges)."""
    d = np.minimum(np.minimum(point_segment(p, a, b), point_segment(p, b, c)),
                   point_segment(p, c, a))
    n = np.cross(b - a, c - a)
    nn = _dot(n, n)
    ok = nn > 0
    safe = np.where(ok, nn, 1.0)
    w = p - a
    # barycentric coordinates of the projection onto the plane
    u = _dot(np.cross(w, c - a), n) / safe
    v = _dot(np.cross(b - a, w), n) / safe
    inside = ok & (u >= 0) & (v >= 0) & (u + v <= 1)
    plane = np.abs(_dot(w, n)) / np.sqrt(safe)
    return np.where(inside, np.minimum(plane, d), d)


def segment_segment(p0, p1, q0, q1):
    """Distance between segments ``p0p1`` and ``q0q1``."""
    d = np.minimum(np.minimum(point_segment(p0, q0, q1), point_segment(p1, q0, q1)),
                   np.minimum(point_segment(q0, p0, p1), point_segment(q1, p0, p1)))
    e1, e2, r = p1 - p0, q1 - q0, p0 - q0
    a, b, c = _dot(e1, e1), _dot(e1, e2), _dot(e2, e2)
    dd, e = _dot(e1, r), _dot(e2, r)
    den = a * c - b * b
    ok = den > 1e-300 * np.maximum(a * c, 1e-300)
    safe = np.where(ok, den, 1.0)
    s = (b * e - c * dd) / safe
    t = (a * e - b * dd) / safe
    interior = ok & (s > 0) & (s < 1) & (t > 0) & (t < 1)
    gap = np.linalg.norm((p0 + s[..., None] * e1) - (q0 + t[..., None] * e2), axis=-1)
    return np.where(interior, np.minimum(gap, d), d)


def query_distances(queries: NarrowQueries, t: float = 0.0) -> np.ndarray:
    """Distance between each query's two primitives at time ``t``.

    Non-finite results (degenerate input) map to 0.
    """
    if len(queries) == 0:
        return np.empty(0)
    x = queries.pts0 if t == 0.0 else (1.0 - t) * queries.pts0 + t * queries.pts1
    out = np.empty(len(queries))
    vf = queries.kinds == VF
    if vf.any():
        q = x[vf]
        out[vf] = point_triangle(q[:, 0], q[:, 1], q[:, 2], q[:, 3])
    if (~vf).any():
        q = x[~vf]
        out[~vf] = segment_segment(q[:, 0], q[:, 1], q[:, 2], q[:, 3])
    out[~np.isfinite(out)] = 0.0
    return out
