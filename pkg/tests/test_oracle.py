import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import golden_cases
from stqccd.broadphase import EE, VF, NarrowQuery, bf
from stqccd.geometry import SceneStep, build_boxes
from stqccd.oracle import (COLLIDING, INDETERMINATE, NOT_COLLIDING, OracleVerdict,
                           coplanarity_polynomial, dump_verdicts, ground_truth_pairs,
                           load_verdicts, oracle_toi, query_hash, separation_margin)
from stqccd.oracle import poly as P
from stqccd.scenes import (parallel_query, plane_crossing_query, plane_crossing_scene,
                           random_queries, separated_pair_scene, tangent_query, tet_soup)

TRI = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_golden_verdicts_frozen():
    for q, frozen, h in golden_cases():
        assert query_hash(q) == h
        v = oracle_toi(q, margin=False)
        assert v.status == frozen.status
        assert (v.root_lo, v.root_hi) == (frozen.root_lo, frozen.root_hi)


def test_plane_query_root():
    v = oracle_toi(plane_crossing_query())
    assert v.status == COLLIDING
    assert v.root_lo <= Fraction(1, 2) <= v.root_hi
    assert v.root_hi - v.root_lo <= Fraction(1, 2 ** 120)
    assert v.earliest_root_bounds == (0.5, 0.5)


def test_parallel_query_margin():
    v = oracle_toi(parallel_query())
    assert v.status == NOT_COLLIDING
    # the point stays exactly one unit above the triangle plane
    assert 0.5 <= v.margin <= 1.0
    assert separation_margin(parallel_query(), target=0.99) >= 0.99 - 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_tangent_double_root(seed):
    q = tangent_query(seed)
    p = coplanarity_polynomial(q)
    half = Fraction(1, 2)
    assert P.evaluate(p, half) == 0 and P.evaluate(P.deriv(p), half) == 0
    v = oracle_toi(q, margin=False)
    assert v.colliding and v.root_lo <= half <= v.root_hi


def test_bounds_monotone_in_precision():
    for q in random_queries(30, seed=5):
        prev = None
        for prec in (128, 160, 256):
            v = oracle_toi(q, prec, margin=False)
            if prev is not None:
                assert v.status == prev.status
                if v.colliding:
                    assert prev.root_lo <= v.root_lo <= v.root_hi <= prev.root_hi
                    assert v.root_hi - v.root_lo <= Fraction(1, 2 ** prec)
            prev = v


def test_precision_floor_and_bad_input():
    with pytest.raises(ValueError):
        oracle_toi(plane_crossing_query(), precision=64)
    bad = plane_crossing_query()
    bad.points_t0[0, 0] = np.nan
    with pytest.raises(ValueError):
        oracle_toi(bad)


def test_coplanar_for_all_time_is_indeterminate():
    q = NarrowQuery(VF, np.vstack([[0.2, 0.2, 0], TRI]), np.vstack([[0.3, 0.2, 0], TRI]))
    assert oracle_toi(q).status == INDETERMINATE


def test_json_roundtrip(tmp_path):
    qs = [plane_crossing_query(), parallel_query(), tangent_query(1)]
    vs = [oracle_toi(q) for q in qs]
    path = tmp_path / "v.json"
    dump_verdicts(qs, vs, path)
    loaded = load_verdicts(path)
    for q, v in zip(qs, vs):
        assert loaded[query_hash(q)] == v
    row = json.loads(path.read_text())[0]
    assert row["root_lo"] == "0.5"


def test_verdict_from_json_exact_decimal():
    v = OracleVerdict(COLLIDING, Fraction(1, 3), Fraction(3, 8))
    with pytest.raises(ValueError):
        v.to_json()  # non-dyadic bounds have no exact decimal form
    w = OracleVerdict(COLLIDING, Fraction(5, 2 ** 70), Fraction(6, 2 ** 70))
    assert OracleVerdict.from_json(w.to_json()) == w


def test_hand_built_crossing_edges():
    # edge along x at z=0, edge along y sweeping from z=1 to z=-3: crossing at t=1/4
    e0 = np.array([[-1.0, 0, 0], [1, 0, 0]])
    a = np.array([[0.0, -1, 1], [0, 1, 1]])
    b = np.array([[0.0, -1, -3], [0, 1, -3]])
    q = NarrowQuery(EE, np.vstack([e0, a]), np.vstack([e0, b]))
    v = oracle_toi(q)
    assert v.colliding and v.root_lo == v.root_hi == Fraction(1, 4)
    # shift the sweeping edge beyond the first edge's end: no contact
    q2 = NarrowQuery(EE, np.vstack([e0, a + [2, 0, 0]]), np.vstack([e0, b + [2, 0, 0]]))
    assert oracle_toi(q2).status == NOT_COLLIDING


def test_vertex_hits_triangle_edge_exactly():
    # boundary contacts count as collisions
    q = NarrowQuery(VF, np.vstack([[0.5, 0.0, 1.0], TRI]), np.vstack([[0.5, 0.0, -1.0], TRI]))
    assert oracle_toi(q).colliding


def _float_check(q, v):
    """Independent float evaluation: the residual at the reported root must be tiny."""
    t = float(v.root_lo)
    pts = q.points_t0 + t * (q.points_t1 - q.points_t0)
    if q.kind == VF:
        p, a, b, c = pts
        A = np.stack([b - a, c - a], axis=1)
        rhs = p - a
    else:
        p0, p1, p2, p3 = pts
        A = np.stack([p1 - p0, -(p3 - p2)], axis=1)
        rhs = p2 - p0
    uv = np.linalg.lstsq(A, rhs, rcond=None)[0]
    res = np.linalg.norm(A @ uv - rhs)
    assert res < 1e-9 * max(1.0, np.abs(pts).max())
    assert np.all(uv > -1e-9) and np.all(uv < 1 + 1e-9)
    if q.kind == VF:
        assert uv.sum() < 1 + 1e-9


def test_float_cross_check_random():
    hits = 0
    for q in random_queries(150, seed=77):
        v = oracle_toi(q, margin=False)
        if v.colliding:
            hits += 1
            _float_check(q, v)
    assert hits > 5


@given(st.integers(0, 2 ** 31), st.floats(-2, 2))
def test_vertex_through_static_triangle(seed, z_end):
    rng = np.random.default_rng(seed)
    u, v = rng.dirichlet([1, 1, 1])[:2]
    p = np.array([u, v, 1.0])
    q = NarrowQuery(VF, np.vstack([p, TRI]), np.vstack([[u, v, z_end], TRI]))
    verdict = oracle_toi(q, margin=False)
    assert verdict.colliding == (z_end <= 0)
    if verdict.colliding:
        exact = Fraction(1) / (1 - Fraction(z_end))
        assert verdict.root_lo <= exact <= verdict.root_hi


def test_ground_truth_distant_and_plane_scene():
    assert ground_truth_pairs(separated_pair_scene()).colliding == set()
    gt = ground_truth_pairs(plane_crossing_scene())
    assert len(gt.colliding) >= 1 and not gt.indeterminate


def test_ground_truth_subset_of_broad_candidates():
    sc = tet_soup(25, seed=3, extent=2.5, motion=0.6)
    gt = ground_truth_pairs(sc)
    assert gt.colliding
    assert gt.colliding <= bf(build_boxes(sc)).to_set()
    assert gt.pairs_checked >= len(gt.colliding)


def test_ground_truth_static_touching_scene():
    # two triangles sharing no vertex, one vertex resting on the other face
    v = np.vstack([TRI, [[0.2, 0.2, 0.0], [1, 1, 1], [0.2, 1, 1]]])
    sc = SceneStep.from_faces(v, v.copy(), [[0, 1, 2], [3, 4, 5]])
    gt = ground_truth_pairs(sc)
    assert gt.colliding or gt.indeterminate
