import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_boxset
from stqccd.broadphase import (EE, VF, BroadStats, CandidatePair, CandidateSet, NarrowQueries,
                               NarrowQuery, SortedBoxes, bf, choose_axis, classify, sap, stq)
from stqccd.geometry import Aabb, BoxSet, PrimitiveId, PrimitiveKind, SceneStep, build_boxes
from stqccd.scenes import cloth_grid, tet_soup

V, E, F = PrimitiveKind.VERTEX, PrimitiveKind.EDGE, PrimitiveKind.FACE


def box(lo, hi, kind, index):
    return Aabb(np.array(lo, np.float32), np.array(hi, np.float32), PrimitiveId(kind, index))


def brute_force_pairs(boxes: BoxSet) -> set:
    """Direct numpy all-pairs reference, independent of the numba kernels."""
    lo, hi = boxes.lo, boxes.hi
    ov = np.all((lo[:, None] <= hi[None]) & (lo[None] <= hi[:, None]), axis=2)
    out = set()
    for i, j in zip(*np.nonzero(np.triu(ov, 1))):
        ki, kj = int(boxes.kind[i]), int(boxes.kind[j])
        if not ((ki == kj == 1) or {ki, kj} == {0, 2}):
            continue
        vi = set(boxes.verts[i][boxes.verts[i] >= 0])
        vj = set(boxes.verts[j][boxes.verts[j] >= 0])
        if vi & vj:
            continue
        out.add(CandidatePair(boxes.owner(i), boxes.owner(j)))
    return out


def test_candidate_pair_canonical():
    a, b = PrimitiveId(F, 2), PrimitiveId(V, 7)
    p = CandidatePair(a, b)
    assert p.left == b and p.right == a
    assert p == CandidatePair(b, a)
    with pytest.raises(ValueError):
        CandidatePair(a, a)


def test_choose_axis_examples():
    boxes = BoxSet.from_aabbs([box([x, 0, 0], [x, 0, 0], V, i) for i, x in enumerate((0, 10, 20))])
    assert choose_axis(boxes) == 0
    single = BoxSet.from_aabbs([box([1, 2, 3], [4, 5, 6], V, 0)])
    assert choose_axis(single) == 0
    with pytest.raises(ValueError):
        choose_axis(BoxSet.from_aabbs([]))


def test_choose_axis_stretched(rng):
    c = rng.normal(size=(1000, 3)) * [1, 1, 100]
    bs = BoxSet(c, c, np.zeros(1000), np.arange(1000), np.full((1000, 3), -1))
    centers = (bs.lo.astype(float) + bs.hi.astype(float)) / 2
    assert choose_axis(bs) == 2 == int(np.argmax(centers.var(axis=0)))


def test_disjoint_in_z():
    bs = BoxSet.from_aabbs([box([0, 0, 0], [1, 1, 1], V, 0), box([0, 0, 2], [1, 1, 3], F, 0)])
    for fn in (stq, bf, sap):
        assert len(fn(bs)) == 0


def test_single_and_empty():
    one = BoxSet.from_aabbs([box([0, 0, 0], [1, 1, 1], V, 0)])
    empty = BoxSet.from_aabbs([])
    for fn in (stq, bf, sap):
        assert len(fn(one)) == 0
        assert len(fn(empty)) == 0


def test_identical_boxes_vertex_face():
    bs = BoxSet.from_aabbs([box([0, 0, 0], [1, 1, 1], V, 0), box([0, 0, 0], [1, 1, 1], F, 0)])
    for fn in (stq, bf, sap):
        assert fn(bs).to_set() == {CandidatePair(PrimitiveId(V, 0), PrimitiveId(F, 0))}


def test_nested_boxes():
    bs = BoxSet.from_aabbs([box([0, 0, 0], [10, 10, 10], E, 0), box([4, 4, 4], [5, 5, 5], E, 1)])
    for fn in (stq, bf, sap):
        assert fn(bs).to_set() == {CandidatePair(PrimitiveId(E, 0), PrimitiveId(E, 1))}


def test_gapped_line():
    bs = BoxSet.from_aabbs([box([2 * i, 0, 0], [2 * i + 1, 1, 1], E, i) for i in range(20)])
    for fn in (stq, bf, sap):
        assert len(fn(bs)) == 0


def test_touching_faces_count_as_overlap():
    bs = BoxSet.from_aabbs([box([0, 0, 0], [1, 1, 1], E, 0), box([1, 1, 1], [2, 2, 2], E, 1)])
    assert len(stq(bs)) == 1


def test_kind_and_adjacency_filters():
    # every pair of primitives of a single triangle shares a vertex
    sc = SceneStep.from_faces(np.eye(3), np.eye(3) + 0.5, [[0, 1, 2]])
    assert len(bf(build_boxes(sc))) == 0
    # a tetrahedron keeps at most its 3 opposite edge pairs and 4 vertex-face pairs
    tet = build_boxes(tet_soup(1, seed=0))
    assert len(bf(tet)) <= 7 and bf(tet).to_set() == brute_force_pairs(tet)
    # vertex-vertex, face-face, vertex-edge and edge-face pairs never appear
    sc2 = tet_soup(30, seed=1, extent=2.0)
    for p in stq(build_boxes(sc2)):
        kinds = {p.left.kind, p.right.kind}
        assert kinds in ({E}, {V, F})


@pytest.mark.parametrize("k", [2, 10, 500])
def test_stq_equals_bf_random(k, rng):
    bs = random_boxset(rng, k)
    ref = bf(bs)
    assert stq(bs) == ref
    assert sap(bs) == ref
    assert ref.to_set() == brute_force_pairs(bs)


@given(st.integers(1, 300), st.integers(0, 2 ** 32 - 1), st.floats(0.1, 20))
def test_exactness_property(k, seed, spread):
    bs = random_boxset(np.random.default_rng(seed), k, spread=spread)
    ref = bf(bs)
    assert stq(bs) == ref
    assert sap(bs) == ref


@given(st.integers(0, 2 ** 32 - 1))
def test_exactness_with_coincident_coordinates(seed):
    # integer-valued boxes produce many equal min/max values (tie handling)
    rng = np.random.default_rng(seed)
    k = 60
    lo = rng.integers(0, 5, (k, 3)).astype(np.float32)
    hi = lo + rng.integers(0, 3, (k, 3))
    bs = BoxSet(lo, hi, rng.integers(0, 3, k), np.arange(k), np.full((k, 3), -1))
    assert stq(bs) == bf(bs) == sap(bs)
    assert bf(bs).to_set() == brute_force_pairs(bs)


@given(st.integers(2, 400), st.integers(0, 2 ** 32 - 1))
def test_queue_bound_property(k, seed):
    bs = random_boxset(np.random.default_rng(seed), k)
    stats = BroadStats()
    stq(bs, stats=stats)
    rs = stats.round_sizes
    assert all(r <= k - 1 for r in rs)
    assert all(a >= b for a, b in zip(rs, rs[1:]))


def test_threads_deterministic(rng):
    bs = random_boxset(rng, 3000, spread=30)
    base = stq(bs)
    for n in (2, 4, 8):
        assert np.array_equal(stq(bs, threads=n).pairs, base.pairs)
        assert np.array_equal(sap(bs, threads=n).pairs, base.pairs)
        assert np.array_equal(bf(bs, threads=n).pairs, base.pairs)
    stats1, stats4 = BroadStats(), BroadStats()
    stq(bs, stats=stats1)
    stq(bs, threads=4, stats=stats4)
    assert stats1.round_sizes == stats4.round_sizes


def test_sorted_boxes_tie_break():
    bs = BoxSet.from_aabbs([box([0, 0, 0], [1, 1, 1], F, 1), box([0, 0, 0], [1, 1, 1], E, 3),
                            box([0, 0, 0], [1, 1, 1], E, 2), box([0, 0, 0], [1, 1, 1], V, 9)])
    sb = SortedBoxes.build(bs)
    owners = [bs.owner(int(i)) for i in sb.order]
    assert owners == sorted(owners)


def test_candidate_set_equality_and_concat(rng):
    bs = random_boxset(rng, 200)
    c = stq(bs)
    half = len(c) // 2
    parts = [CandidateSet(c.pairs[half:], bs), CandidateSet(c.pairs[:half], bs)]
    assert CandidateSet.concat(parts, bs) == c
    assert c == c.to_set()


def _scene_pair(kind_a, a, kind_b, b):
    return CandidatePair(PrimitiveId(kind_a, a), PrimitiveId(kind_b, b))


def test_classify_vertex_face_gather():
    sc = cloth_grid(4, 4, seed=0)
    f = 7
    v = next(i for i in range(sc.num_vertices) if i not in sc.faces[f])
    vf, ee = classify([_scene_pair(V, v, F, f)], sc)
    assert len(vf) == 1 and len(ee) == 0
    q = vf[0]
    assert q.kind == VF
    idx = [v, *sc.faces[f]]
    np.testing.assert_array_equal(q.points_t0, sc.vertices_t0[idx])
    np.testing.assert_array_equal(q.points_t1, sc.vertices_t1[idx])
    assert q.source == _scene_pair(V, v, F, f)


def test_classify_drops_adjacent_and_other_kinds():
    sc = cloth_grid(4, 4, seed=0)
    e0 = sc.edges[0]
    sharing = next(j for j in range(1, len(sc.edges)) if set(sc.edges[j]) & set(e0))
    disjoint = next(j for j in range(1, len(sc.edges)) if not set(sc.edges[j]) & set(e0))
    pairs = [_scene_pair(E, 0, E, sharing), _scene_pair(E, 0, E, disjoint),
             _scene_pair(F, 0, F, 5), _scene_pair(V, 0, V, 5), _scene_pair(V, 9, E, 0),
             _scene_pair(E, 3, F, 8), _scene_pair(V, int(sc.faces[2][0]), F, 2)]
    vf, ee = classify(pairs, sc)
    assert len(vf) == 0
    assert len(ee) == 1 and ee[0].kind == EE
    np.testing.assert_array_equal(ee[0].points_t0, sc.vertices_t0[[*e0, *sc.edges[disjoint]]])


def test_classify_index_error():
    sc = cloth_grid(3, 3)
    with pytest.raises(IndexError):
        classify([_scene_pair(V, 0, F, 999)], sc)


def test_classify_candidate_set_matches_list():
    sc = cloth_grid(6, 6, seed=2, motion=0.4)
    c = stq(build_boxes(sc))
    vf1, ee1 = classify(c, sc)
    vf2, ee2 = classify(list(c), sc)
    np.testing.assert_array_equal(vf1.pts0, vf2.pts0)
    np.testing.assert_array_equal(ee1.sources, ee2.sources)


def test_narrow_queries_containers():
    q = NarrowQuery(VF, np.zeros((4, 3)), np.ones((4, 3)))
    qs = NarrowQueries.from_list([q, q])
    assert len(qs) == 2 and qs[0].source is None
    assert len(NarrowQueries.concat([qs, NarrowQueries.empty(), qs[:1]])) == 3
    assert qs.nbytes > 0
