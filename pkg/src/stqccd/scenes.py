"""Seeded synthetic scenes and queries for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .broadphase import EE, VF, NarrowQuery
from .geometry import SceneStep


def _grid_faces(nx: int, ny: int, offset: int = 0) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    a = (i * ny + j).ravel() + offset
    b, c, d = a + ny, a + 1, a + ny + 1
    return np.concatenate([np.stack([a, b, c], 1), np.stack([c, b, d], 1)])


def cloth_grid(nx: int, ny: int, seed: int = 0, jitter: float = 0.2,
               z_noise: float = 0.05, motion: float = 0.3, fold: float = 0.0) -> SceneStep:
    """A jittered nx-by-ny sheet in the xy-plane with random vertex motion.

    ``fold`` lifts half of the sheet over the other during the step, which
    produces self-contacts.
    """
    rng = np.random.default_rng(seed)
    x, y = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float), indexing="ij")
    v0 = np.stack([x.ravel(), y.ravel(), np.zeros(x.size)], 1)
    v0[:, :2] += rng.uniform(-jitter, jitter, (len(v0), 2))
    v0[:, 2] += rng.normal(0.0, z_noise, len(v0))
    v1 = v0 + rng.normal(0.0, motion, v0.shape)
    if fold:
        mid = 0.5 * (nx - 1)
        right = v0[:, 0] > mid
        v1[right, 0] = 2 * mid - v0[right, 0]
        v1[right, 2] += fold
    return SceneStep.from_faces(v0, v1, _grid_faces(nx, ny))


def two_sheets(n: int, seed: int = 0, gap: float = 0.5, approach: float = 1.0) -> SceneStep:
    """Two stacked n-by-n sheets moving toward each other by ``approach``."""
    rng = np.random.default_rng(seed)
    x, y = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n), indexing="ij")
    base = np.stack([x.ravel(), y.ravel(), np.zeros(x.size)], 1)
    lower = base + rng.normal(0, 0.01, base.shape)
    upper = base + rng.normal(0, 0.01, base.shape) + [0.013, 0.007, gap]
    v0 = np.concatenate([lower, upper])
    shift = np.zeros_like(v0)
    shift[len(base):, 2] = -approach
    v1 = v0 + shift + rng.normal(0, 0.02, v0.shape)
    faces = np.concatenate([_grid_faces(n, n), _grid_faces(n, n, len(base))])
    return SceneStep.from_faces(v0, v1, faces)


_TET_FACES = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])


def tet_soup(count: int, seed: int = 0, extent: float = 4.0, size: float = 1.0,
             motion: float = 1.0) -> SceneStep:
    """Random tetrahedra translating and deforming independently."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0, extent, (count, 1, 3))
    shape = rng.normal(0, size / 2, (count, 4, 3))
    v0 = (centers + shape).reshape(-1, 3)
    v1 = v0 + np.repeat(rng.normal(0, motion, (count, 1, 3)), 4, axis=1).reshape(-1, 3)
    v1 += rng.normal(0, 0.05 * size, v1.shape)
    faces = (_TET_FACES[None] + 4 * np.arange(count)[:, None, None]).reshape(-1, 3)
    return SceneStep.from_faces(v0, v1, faces)


def ribbon(segments: int, seed: int = 0, motion: float = 0.05) -> SceneStep:
    """A long twisted strip along x (two vertex rows), about 7 boxes per segment.

    Overlap along the sweep axis stays local, so the number of candidate
    pairs grows linearly with length.
    """
    rng = np.random.default_rng(seed)
    x = np.arange(segments + 1, dtype=float)
    twist = 0.3 * x
    row0 = np.stack([x, 0.5 * np.cos(twist), 0.5 * np.sin(twist)], 1)
    row1 = np.stack([x + 0.1, -0.5 * np.cos(twist), -0.5 * np.sin(twist)], 1)
    v0 = np.empty((2 * (segments + 1), 3))
    v0[0::2], v0[1::2] = row0, row1
    v0 += rng.normal(0, 0.02, v0.shape)
    v1 = v0 + rng.normal(0, motion, v0.shape)
    return SceneStep.from_faces(v0, v1, _grid_faces(segments + 1, 2))


def random_queries(count: int, seed: int = 0, vf_fraction: float = 0.5,
                   scale: float = 1.0) -> list[NarrowQuery]:
    """Queries with uniform random endpoints in the unit cube (a mix of hits and misses)."""
    rng = np.random.default_rng(seed)
    kinds = np.where(rng.random(count) < vf_fraction, VF, EE)
    p0 = rng.random((count, 4, 3)) * scale
    p1 = rng.random((count, 4, 3)) * scale
    return [NarrowQuery(int(k), a, b) for k, a, b in zip(kinds, p0, p1)]


def plane_crossing_query() -> NarrowQuery:
    """Point crossing a fixed unit triangle in z = 0 at exactly t = 0.5."""
    tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    p0 = np.vstack([[0.25, 0.25, 1.0], tri])
    p1 = np.vstack([[0.25, 0.25, -1.0], tri])
    return NarrowQuery(VF, p0, p1)


def parallel_query() -> NarrowQuery:
    """Point sliding one unit above the same triangle; never touches it."""
    tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    p0 = np.vstack([[0.1, 0.1, 1.0], tri])
    p1 = np.vstack([[0.6, 0.2, 1.0], tri])
    return NarrowQuery(VF, p0, p1)


_MIRROR = np.array([1.0, 1.0, -1.0])


def tangent_query(seed: int = 0) -> NarrowQuery:
    """Edge-edge query whose coplanarity polynomial has a double root at t = 0.5.

    The end state is the z-mirror of the start state with the first edge's
    endpoints swapped. Mirroring flips the sign of the coplanarity determinant
    and the swap flips it back, so the polynomial is symmetric about 0.5; the
    edges meet at the origin at t = 0.5 and separate again on the same side.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 1.5)
    h = rng.uniform(0.2, 1.0)
    x2 = rng.uniform(-0.4, 0.4)
    start = np.array([[-a, 0.0, h], [a, 0.0, -h],
                      [x2, -1.0, rng.uniform(0.2, 1.0)], [-x2, 1.0, rng.uniform(0.2, 1.0)]])
    end = start[[1, 0, 2, 3]] * _MIRROR
    return NarrowQuery(EE, start, end)


def near_touching_queries(count: int, seed: int = 0) -> list[NarrowQuery]:
    """Vertex-face and edge-edge pairs separated at t = 0 by a tiny gap.

    Half of them close in without ever touching, the rest pass through the
    face or edge shortly after the start.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        gap = 10.0 ** rng.uniform(-9, -7)
        crosses = i % 2 == 1
        end_z = -rng.uniform(0.1, 1.0) if crosses else gap * rng.uniform(0.05, 0.9)
        drift = rng.normal(0, 0.01, 2)
        if i % 4 < 2:
            tri = rng.uniform(-0.1, 0.1, (3, 3)) * [1, 1, 0] + [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
            tri[:, 2] = 0.0
            p = np.array([0.25, 0.25, gap])
            q = np.array([0.25 + drift[0], 0.25 + drift[1], end_z])
            out.append(NarrowQuery(VF, np.vstack([p, tri]), np.vstack([q, tri])))
        else:
            e0 = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
            e1 = np.array([[0.0, -1.0, gap], [0.0, 1.0, gap]])
            e1_end = e1.copy()
            e1_end[:, 2] = end_z
            e1_end[:, :2] += drift
            out.append(NarrowQuery(EE, np.vstack([e0, e1]), np.vstack([e0, e1_end])))
    return out


def separated_pair_scene(offset: float = 10.0) -> SceneStep:
    """Two static triangles far apart."""
    tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    v = np.vstack([tri, tri + [offset, offset, offset]])
    return SceneStep.from_faces(v, v.copy(), np.array([[0, 1, 2], [3, 4, 5]]))


def plane_crossing_scene() -> SceneStep:
    """A fixed triangle and a separate moving triangle whose tip crosses it at t = 0.5."""
    tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    probe0 = np.array([[0.25, 0.25, 1.0], [0.25, 0.25, 3.0], [0.3, 0.25, 3.0]])
    probe1 = probe0 - [0, 0, 2.0]
    v0 = np.vstack([tri, probe0])
    v1 = np.vstack([tri, probe1])
    return SceneStep.from_faces(v0, v1, np.array([[0, 1, 2], [3, 4, 5]]))
