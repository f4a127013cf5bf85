"""Mesh data model and conservative single-precision swept boxes."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

#: Absolute padding (world units) used on zero-extent axes when inflating.
ZERO_EXTENT_PAD = 1e-8


class SceneError(ValueError):
    """Raised for malformed scenes or scene files."""


class PrimitiveKind(enum.IntEnum):
    VERTEX = 0
    EDGE = 1
    FACE = 2


@dataclass(frozen=True, order=True)
class PrimitiveId:
    kind: PrimitiveKind
    index: int

    def __repr__(self) -> str:
        return f"{self.kind.name.capitalize()}({self.index})"


def edges_from_faces(faces: np.ndarray) -> np.ndarray:
    """Unique undirected edges of a triangle list, sorted lexicographically."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return np.empty((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


@dataclass
class SceneStep:
    """Two vertex snapshots (t=0 and t=1) sharing one topology."""

    vertices_t0: np.ndarray
    vertices_t1: np.ndarray
    edges: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices_t0 = np.ascontiguousarray(self.vertices_t0, dtype=np.float64).reshape(-1, 3)
        self.vertices_t1 = np.ascontiguousarray(self.vertices_t1, dtype=np.float64).reshape(-1, 3)
        self.edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.validate()

    @classmethod
    def from_faces(cls, vertices_t0, vertices_t1, faces) -> "SceneStep":
        """Build a scene whose edge list is derived from the faces."""
        return cls(vertices_t0, vertices_t1, edges_from_faces(faces), faces)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices_t0)

    @property
    def num_primitives(self) -> int:
        return len(self.vertices_t0) + len(self.edges) + len(self.faces)

    def validate(self) -> None:
        n = len(self.vertices_t0)
        if len(self.vertices_t1) != n:
            raise SceneError(
                f"vertex count mismatch: {n} at t=0 vs {len(self.vertices_t1)} at t=1")
        if not (np.isfinite(self.vertices_t0).all() and np.isfinite(self.vertices_t1).all()):
            raise SceneError("non-finite vertex coordinate")
        for name, arr in (("edge", self.edges), ("face", self.faces)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise SceneError(f"{name} index out of range")
        if len(self.edges) and np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise SceneError("edge with repeated endpoint")
        f = self.faces
        if len(f) and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise SceneError("face with repeated vertex")

    def primitive_vertices(self, pid: PrimitiveId) -> tuple[int, ...]:
        if pid.kind == PrimitiveKind.VERTEX:
            return (int(pid.index),)
        if pid.kind == PrimitiveKind.EDGE:
            return tuple(int(i) for i in self.edges[pid.index])
        return tuple(int(i) for i in self.faces[pid.index])

    def positions_at(self, t: float) -> np.ndarray:
        return (1.0 - t) * self.vertices_t0 + t * self.vertices_t1


# ---------------------------------------------------------------------------
# Outward rounding to single precision
# ---------------------------------------------------------------------------

def _check_finite(x) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot round a non-finite value")


def round_down_reduced(x):
    """Largest float32 that is <= ``x`` (scalar or array)."""
    _check_finite(x)
    x64 = np.asarray(x, dtype=np.float64)
    r = x64.astype(np.float32)
    above = r.astype(np.float64) > x64
    r = np.where(above, np.nextafter(r, np.float32(-np.inf)), r)
    return r[()] if r.ndim == 0 else r


def round_up_reduced(x):
    """Smallest float32 that is >= ``x`` (scalar or array)."""
    _check_finite(x)
    x64 = np.asarray(x, dtype=np.float64)
    r = x64.astype(np.float32)
    below = r.astype(np.float64) < x64
    r = np.where(below, np.nextafter(r, np.float32(np.inf)), r)
    return r[()] if r.ndim == 0 else r


# ---------------------------------------------------------------------------
# Boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray  # float32, shape (3,)
    max_corner: np.ndarray
    owner: PrimitiveId

    def overlaps(self, other: "Aabb") -> bool:
        return bool(np.all(self.min_corner <= other.max_corner)
                    and np.all(other.min_corner <= self.max_corner))


@dataclass
class BoxSet:
    """Struct-of-arrays box list.

    ``verts`` holds the mesh vertex ids of each box's primitive, padded with -1;
    it drives the shared-vertex exclusion in the broad phase.
    """

    lo: np.ndarray
    hi: np.ndarray
    kind: np.ndarray
    index: np.ndarray
    verts: np.ndarray
    inflation: float = 0.0

    def __post_init__(self):
        self.lo = np.ascontiguousarray(self.lo, dtype=np.float32).reshape(-1, 3)
        self.hi = np.ascontiguousarray(self.hi, dtype=np.float32).reshape(-1, 3)
        self.kind = np.ascontiguousarray(self.kind, dtype=np.int8)
        self.index = np.ascontiguousarray(self.index, dtype=np.int64)
        self.verts = np.ascontiguousarray(self.verts, dtype=np.int64).reshape(-1, 3)
        k = len(self.lo)
        if not (len(self.hi) == len(self.kind) == len(self.index) == len(self.verts) == k):
            raise ValueError("box arrays have inconsistent lengths")
        if np.any(self.lo > self.hi):
            raise ValueError("box with min_corner > max_corner")

    def __len__(self) -> int:
        return len(self.lo)

    def __getitem__(self, i: int) -> Aabb:
        return Aabb(self.lo[i].copy(), self.hi[i].copy(), self.owner(i))

    def __iter__(self) -> Iterator[Aabb]:
        for i in range(len(self)):
            yield self[i]

    def owner(self, i: int) -> PrimitiveId:
        return PrimitiveId(PrimitiveKind(int(self.kind[i])), int(self.index[i]))

    def subset(self, idx: np.ndarray) -> "BoxSet":
        return BoxSet(self.lo[idx], self.hi[idx], self.kind[idx], self.index[idx],
                      self.verts[idx], self.inflation)

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.lo, self.hi, self.kind, self.index, self.verts))

    @classmethod
    def from_aabbs(cls, boxes: Sequence[Aabb], scene: Optional[SceneStep] = None) -> "BoxSet":
        """Pack a list of :class:`Aabb`; vertex ids come from ``scene`` if given."""
        k = len(boxes)
        lo = np.array([b.min_corner for b in boxes], dtype=np.float32).reshape(k, 3)
        hi = np.array([b.max_corner for b in boxes], dtype=np.float32).reshape(k, 3)
        kind = np.array([int(b.owner.kind) for b in boxes], dtype=np.int8)
        index = np.array([b.owner.index for b in boxes], dtype=np.int64)
        verts = np.full((k, 3), -1, dtype=np.int64)
        for i, b in enumerate(boxes):
            if scene is not None:
                vs = scene.primitive_vertices(b.owner)
            elif b.owner.kind == PrimitiveKind.VERTEX:
                vs = (b.owner.index,)
            else:
                vs = ()
            verts[i, :len(vs)] = vs
        return cls(lo, hi, kind, index, verts)


def primitive_table(scene: SceneStep) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(kind, index, verts) for every primitive in box order: vertices, edges, faces."""
    nv, ne, nf = scene.num_vertices, len(scene.edges), len(scene.faces)
    kind = np.concatenate([
        np.full(nv, PrimitiveKind.VERTEX, np.int8),
        np.full(ne, PrimitiveKind.EDGE, np.int8),
        np.full(nf, PrimitiveKind.FACE, np.int8),
    ])
    index = np.concatenate([np.arange(nv), np.arange(ne), np.arange(nf)]).astype(np.int64)
    verts = np.full((nv + ne + nf, 3), -1, dtype=np.int64)
    verts[:nv, 0] = np.arange(nv)
    verts[nv:nv + ne, :2] = scene.edges
    verts[nv + ne:, :] = scene.faces
    return kind, index, verts


def swept_extent(scene: SceneStep) -> tuple[np.ndarray, np.ndarray]:
    """Double-precision min/max corners of every primitive's swept trajectory."""
    kind, _, verts = primitive_table(scene)
    pts = np.stack([scene.vertices_t0, scene.vertices_t1])  # (2, n, 3)
    safe = np.where(verts < 0, verts[:, :1], verts)  # pad with the first vertex
    corners = pts[:, safe, :]  # (2, k, 3, 3)
    lo = corners.min(axis=(0, 2))
    hi = corners.max(axis=(0, 2))
    return lo, hi


def build_boxes(scene: SceneStep, inflation: float = 0.0) -> BoxSet:
    """One conservative float32 box per vertex, edge and face (in that order).

    Inflation pads each axis by ``inflation`` times that axis' extent; axes
    with zero extent get ``inflation * ZERO_EXTENT_PAD`` instead.
    """
    if inflation < 0 or not math.isfinite(inflation):
        raise ValueError("inflation must be a finite non-negative fraction")
    scene.validate()
    kind, index, verts = primitive_table(scene)
    lo, hi = swept_extent(scene)
    if inflation > 0:
        ext = hi - lo
        pad = np.where(ext > 0, inflation * ext, inflation * ZERO_EXTENT_PAD)
        lo = lo - pad
        hi = hi + pad
    return BoxSet(round_down_reduced(lo), round_up_reduced(hi), kind, index, verts, inflation)


# ---------------------------------------------------------------------------
# Scene files
# ---------------------------------------------------------------------------

def read_obj(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read vertices, faces and explicit ``l`` edges from a Wavefront OBJ file.

    Polygons are fan-triangulated. Texture/normal references are ignored.
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    lines: list[list[int]] = []

    def _idx(tok: str) -> int:
        i = int(tok.split("/")[0])
        return i - 1 if i > 0 else len(verts) + i

    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(p) for p in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif parts[0] == "f":
                    ids = [_idx(p) for p in parts[1:]]
                    if len(ids) < 3:
                        raise ValueError("face needs >= 3 vertices")
                    faces.extend([ids[0], ids[i], ids[i + 1]] for i in range(1, len(ids) - 1))
                elif parts[0] == "l":
                    ids = [_idx(p) for p in parts[1:]]
                    lines.extend([ids[i], ids[i + 1]] for i in range(len(ids) - 1))
            except ValueError as exc:
                raise SceneError(f"{path}:{lineno}: {exc}") from None
    return (np.array(verts, dtype=np.float64).reshape(-1, 3),
            np.array(faces, dtype=np.int64).reshape(-1, 3),
            np.array(lines, dtype=np.int64).reshape(-1, 2))


def write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(vertices, dtype=np.float64):
            fh.write("v {!r} {!r} {!r}\n".format(*(float(c) for c in v)))
        for f in np.asarray(faces, dtype=np.int64):
            fh.write("f {} {} {}\n".format(*(int(i) + 1 for i in f)))


def load_scene(path_t0, path_t1) -> SceneStep:
    """Load a frame pair; both files must share vertex count and connectivity."""
    v0, f0, l0 = read_obj(path_t0)
    v1, f1, l1 = read_obj(path_t1)
    if len(v0) != len(v1):
        raise SceneError(f"vertex count differs: {path_t0} has {len(v0)}, {path_t1} has {len(v1)}")
    if not (np.array_equal(f0, f1) and np.array_equal(l0, l1)):
        raise SceneError(f"connectivity differs between {path_t0} and {path_t1}")
    edges = edges_from_faces(f0)
    if len(l0):
        e = np.sort(l0, axis=1)
        edges = np.unique(np.concatenate([edges, e]), axis=0)
    return SceneStep(v0, v1, edges, f0)


def read_manifest(path) -> list[tuple[Path, Path]]:
    """Frame pairs from a JSON array of ``{"t0": ..., "t1": ...}`` objects.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError(f"cannot read manifest {path}: {exc}") from None
    if not isinstance(data, list):
        raise SceneError("manifest must be a JSON array")
    pairs = []
    for entry in data:
        if not isinstance(entry, dict) or "t0" not in entry or "t1" not in entry:
            raise SceneError(f"manifest entry needs t0 and t1: {entry!r}")
        pairs.append(tuple(p if Path(p).is_absolute() else path.parent / p
                           for p in (Path(entry["t0"]), Path(entry["t1"]))))
    return pairs
