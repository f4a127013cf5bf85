import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stqccd.geometry import (Aabb, BoxSet, PrimitiveId, PrimitiveKind, SceneError, SceneStep,
                             build_boxes, edges_from_faces, load_scene, read_manifest, read_obj,
                             round_down_reduced, round_up_reduced, write_obj)
from stqccd.scenes import cloth_grid, tet_soup

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e30, max_value=1e30)


def test_round_exact_values():
    assert round_down_reduced(0.0) == np.float32(0.0)
    assert round_up_reduced(0.0) == np.float32(0.0)
    assert round_down_reduced(1.0) == np.float32(1.0)
    assert round_up_reduced(1.0) == np.float32(1.0)


def test_round_point_one_steps_down():
    nearest = np.float32(0.1)
    # the nearest float32 lies above the double 0.1, checked exactly
    assert Fraction(float(nearest)) > Fraction(0.1)
    down = round_down_reduced(0.1)
    assert down == np.nextafter(nearest, np.float32(-np.inf))
    assert Fraction(float(down)) <= Fraction(0.1)
    assert round_up_reduced(0.1) == nearest


@pytest.mark.parametrize("bad", [np.inf, -np.inf, np.nan])
def test_round_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        round_down_reduced(bad)
    with pytest.raises(ValueError):
        round_up_reduced(bad)


@given(finite)
def test_round_down_is_tight_lower_bound(x):
    r = round_down_reduced(x)
    assert r.dtype == np.float32
    assert Fraction(float(r)) <= Fraction(x)
    nxt = np.nextafter(r, np.float32(np.inf))
    assert Fraction(float(nxt)) > Fraction(x)


@given(finite)
def test_round_up_is_tight_upper_bound(x):
    r = round_up_reduced(x)
    assert Fraction(float(r)) >= Fraction(x)
    prv = np.nextafter(r, np.float32(-np.inf))
    assert Fraction(float(prv)) < Fraction(x)


@given(finite)
def test_round_idempotent(x):
    r = round_down_reduced(x)
    assert round_down_reduced(float(r)) == r
    u = round_up_reduced(x)
    assert round_up_reduced(float(u)) == u


def test_round_arrays():
    x = np.array([0.1, -0.1, 3.0])
    lo, hi = round_down_reduced(x), round_up_reduced(x)
    assert lo.shape == hi.shape == (3,)
    assert np.all(lo.astype(np.float64) <= x) and np.all(hi.astype(np.float64) >= x)


def test_static_vertex_box():
    v = np.zeros((1, 3))
    sc = SceneStep(v, v.copy(), np.empty((0, 2)), np.empty((0, 3)))
    boxes = build_boxes(sc)
    assert len(boxes) == 1
    assert np.all(boxes.lo[0] == 0) and np.all(boxes.hi[0] == 0)


def test_moving_edge_box():
    v0 = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    v1 = np.array([[0.0, 0, 1], [1.0, 0, 1]])
    sc = SceneStep(v0, v1, [[0, 1]], np.empty((0, 3)))
    boxes = build_boxes(sc)
    assert boxes.owner(2) == PrimitiveId(PrimitiveKind.EDGE, 0)
    np.testing.assert_array_equal(boxes.lo[2], [0, 0, 0])
    np.testing.assert_array_equal(boxes.hi[2], [1, 0, 1])


def test_box_order_vertices_edges_faces():
    sc = tet_soup(2, seed=1)
    boxes = build_boxes(sc)
    assert len(boxes) == sc.num_primitives
    nv, ne = sc.num_vertices, len(sc.edges)
    assert np.all(boxes.kind[:nv] == 0) and np.all(boxes.kind[nv:nv + ne] == 1)
    assert np.all(boxes.kind[nv + ne:] == 2)
    assert list(boxes.index[nv:nv + ne]) == list(range(ne))


def _assert_contains(scene, boxes, ts):
    nv, ne = scene.num_vertices, len(scene.edges)
    for t in ts:
        x = scene.positions_at(t)
        # vertex boxes
        assert np.all(boxes.lo[:nv] <= x) and np.all(x <= boxes.hi[:nv])
        for off, prims in ((nv, scene.edges), (nv + ne, scene.faces)):
            pts = x[prims]
            assert np.all(boxes.lo[off:off + len(prims), None, :] <= pts)
            assert np.all(pts <= boxes.hi[off:off + len(prims), None, :])


def test_containment_random_primitives():
    # 10^5 random triangles (plus their edges and vertices) at both frames
    rng = np.random.default_rng(3)
    n = 100_000
    v0 = rng.normal(0, 1e3, (3 * n, 3)) * rng.random((3 * n, 1)) ** 4
    v1 = v0 + rng.normal(0, 1.0, v0.shape)
    faces = np.arange(3 * n).reshape(n, 3)
    sc = SceneStep.from_faces(v0, v1, faces)
    boxes = build_boxes(sc)
    off = sc.num_vertices + len(sc.edges)
    for snap in (sc.vertices_t0, sc.vertices_t1):
        pts = snap[faces]
        assert np.all(boxes.lo[off:, None, :].astype(np.float64) <= pts)
        assert np.all(pts <= boxes.hi[off:, None, :].astype(np.float64))


def test_containment_dense_time_sampling():
    # corners of the box hold at t = 0 and t = 1; interpolated samples must stay inside
    sc = cloth_grid(8, 8, seed=4, motion=0.5)
    _assert_contains(sc, build_boxes(sc), np.linspace(0, 1, 33))


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.integers(0, 50))
def test_inflation_monotone(a, b, seed):
    a, b = sorted((a, b))
    sc = tet_soup(3, seed=seed)
    ba, bb = build_boxes(sc, a), build_boxes(sc, b)
    assert np.all(bb.lo <= ba.lo) and np.all(ba.hi <= bb.hi)


def test_inflation_pads_zero_extent_axis():
    v = np.zeros((1, 3))
    sc = SceneStep(v, v.copy(), np.empty((0, 2)), np.empty((0, 3)))
    b = build_boxes(sc, 0.01)
    assert np.all(b.lo[0] < 0) and np.all(b.hi[0] > 0)


def test_inflation_rejects_negative():
    with pytest.raises(ValueError):
        build_boxes(tet_soup(1), -0.1)


@pytest.mark.parametrize("mutate, msg", [
    (lambda v0, v1, e, f: (v0, v1[:-1], e, f), "vertex count"),
    (lambda v0, v1, e, f: (np.where(v0 == v0[0, 0], np.nan, v0), v1, e, f), "non-finite"),
    (lambda v0, v1, e, f: (v0, v1, [[0, 99]], f), "out of range"),
    (lambda v0, v1, e, f: (v0, v1, [[1, 1]], f), "repeated endpoint"),
    (lambda v0, v1, e, f: (v0, v1, e, [[0, 0, 1]]), "repeated vertex"),
])
def test_scene_validation(mutate, msg):
    v0 = np.eye(3)
    with pytest.raises(SceneError, match=msg):
        SceneStep(*mutate(v0, v0.copy(), [[0, 1]], [[0, 1, 2]]))


def test_degenerate_primitives_are_accepted():
    v = np.zeros((3, 3))
    sc = SceneStep.from_faces(v, v.copy(), [[0, 1, 2]])
    b = build_boxes(sc)
    assert np.all(b.lo == b.hi)


def test_edges_from_faces():
    e = edges_from_faces([[0, 1, 2], [2, 1, 3]])
    assert e.tolist() == [[0, 1], [0, 2], [1, 2], [1, 3], [2, 3]]


def test_aabb_overlap_and_boxset_roundtrip():
    a = Aabb(np.zeros(3, np.float32), np.ones(3, np.float32), PrimitiveId(PrimitiveKind.VERTEX, 0))
    b = Aabb(np.ones(3, np.float32), 2 * np.ones(3, np.float32), PrimitiveId(PrimitiveKind.FACE, 0))
    c = Aabb(3 * np.ones(3, np.float32), 4 * np.ones(3, np.float32), PrimitiveId(PrimitiveKind.EDGE, 1))
    assert a.overlaps(b) and not a.overlaps(c)
    bs = BoxSet.from_aabbs([a, b, c])
    assert len(bs) == 3 and bs[1].owner == b.owner
    assert bs.verts[0, 0] == 0 and bs.verts[1, 0] == -1


def test_boxset_rejects_inverted_box():
    with pytest.raises(ValueError):
        BoxSet([[1, 1, 1]], [[0, 0, 0]], [0], [0], [[0, -1, -1]])


def test_obj_roundtrip_and_manifest(tmp_path):
    sc = cloth_grid(3, 3, seed=0)
    write_obj(tmp_path / "a.obj", sc.vertices_t0, sc.faces)
    write_obj(tmp_path / "b.obj", sc.vertices_t1, sc.faces)
    loaded = load_scene(tmp_path / "a.obj", tmp_path / "b.obj")
    np.testing.assert_array_equal(loaded.vertices_t0, sc.vertices_t0)
    np.testing.assert_array_equal(loaded.vertices_t1, sc.vertices_t1)
    np.testing.assert_array_equal(loaded.faces, sc.faces)
    np.testing.assert_array_equal(loaded.edges, sc.edges)
    (tmp_path / "m.json").write_text(json.dumps([{"t0": "a.obj", "t1": "b.obj"}]))
    assert read_manifest(tmp_path / "m.json") == [(tmp_path / "a.obj", tmp_path / "b.obj")]


def test_obj_polygons_lines_and_negative_indices(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 5 5 5\nf 1/1 2/2 3/3 4/4\nl -1 1\n")
    v, f, lines = read_obj(p)
    assert f.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert lines.tolist() == [[4, 0]]


def test_load_scene_mismatch(tmp_path):
    write_obj(tmp_path / "a.obj", np.eye(3), [[0, 1, 2]])
    write_obj(tmp_path / "b.obj", np.eye(3), [[0, 2, 1]])
    with pytest.raises(SceneError, match="connectivity"):
        load_scene(tmp_path / "a.obj", tmp_path / "b.obj")
    write_obj(tmp_path / "c.obj", np.vstack([np.eye(3), [[1, 1, 1]]]), [[0, 1, 2]])
    with pytest.raises(SceneError, match="vertex count"):
        load_scene(tmp_path / "a.obj", tmp_path / "c.obj")


def test_malformed_obj(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0\n")
    with pytest.raises(SceneError, match="bad.obj:1"):
        read_obj(p)


def test_bad_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"t0": "a"}')
    with pytest.raises(SceneError):
        read_manifest(p)
