import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_boxset(rng, k, spread=10.0, size=1.0, n_vertices=None):
    """Random BoxSet with valid kinds, indices and vertex ids."""
    from stqccd.geometry import BoxSet

    centers = rng.uniform(0, spread, (k, 3))
    half = rng.uniform(0, size, (k, 3)) * rng.random((k, 1))
    lo = (centers - half).astype(np.float32)
    hi = (centers + half).astype(np.float32)
    kind = rng.integers(0, 3, k).astype(np.int8)
    index = np.arange(k)
    nv = n_vertices or max(4, k)
    verts = np.full((k, 3), -1, np.int64)
    for i in range(k):
        m = int(kind[i]) + 1
        verts[i, :m] = rng.choice(nv, m, replace=False)
    verts[kind == 0, 0] = index[kind == 0] % nv
    return BoxSet(lo, hi, kind, index, verts)


GOLDEN = os.path.join(os.path.dirname(__file__), "data", "oracle_golden.json")


def golden_cases():
    """Frozen (query, verdict) pairs from tests/data/oracle_golden.json."""
    import json

    from stqccd.broadphase import NarrowQuery
    from stqccd.oracle import OracleVerdict

    with open(GOLDEN) as fh:
        rows = json.load(fh)
    out = []
    for r in rows:
        pts = [np.array([[float.fromhex(x) for x in p] for p in r[k]])
               for k in ("points_t0", "points_t1")]
        out.append((NarrowQuery(int(r["kind"]), *pts), OracleVerdict.from_json(r), r["query"]))
    return out


def scene_from_query(query):
    """Two-primitive scene holding exactly the primitives of ``query``."""
    from stqccd.broadphase import VF
    from stqccd.geometry import SceneStep

    if query.kind == VF:
        return SceneStep.from_faces(query.points_t0, query.points_t1, [[1, 2, 3]])
    return SceneStep(query.points_t0, query.points_t1, [[0, 1], [2, 3]], np.empty((0, 3)))


ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, ok: bool, detail: str, advisory: bool = False) -> None:
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    status = "PASS" if ok else ("ADVISORY" if advisory else "FAIL")
    line = f"[criterion {number:2d}] {status}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
