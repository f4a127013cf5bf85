"""Exact ground truth for narrow- and broad-phase audits."""

from .core import (
    COLLIDING,
    INDETERMINATE,
    NOT_COLLIDING,
    GroundTruth,
    OracleVerdict,
    coplanarity_polynomial,
    dump_verdicts,
    ground_truth_pairs,
    load_verdicts,
    oracle_toi,
    query_hash,
    separation_margin,
)

__all__ = [
    "COLLIDING", "INDETERMINATE", "NOT_COLLIDING", "GroundTruth", "OracleVerdict",
    "coplanarity_polynomial", "dump_verdicts", "ground_truth_pairs", "load_verdicts",
    "oracle_toi", "query_hash", "separation_margin",
]
