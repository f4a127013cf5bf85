"""Continuous collision detection: STQ broad phase, inclusion-based narrow phase,
memory-budgeted pipeline, exact oracle and benchmark harness."""

from .broadphase import (BROAD_PHASES, BroadStats, CandidatePair, CandidateSet, NarrowQueries,
                         NarrowQuery, bf, classify, sap, stq)
from .geometry import (Aabb, BoxSet, PrimitiveId, PrimitiveKind, SceneError, SceneStep,
                       build_boxes, load_scene)
from .narrowphase import (NO_COLLISION, IntervalBox, NarrowConfig, QueueOverflow, ToiResult,
                          inclusion_box, narrow_phase, process_interval, split)
from .pipeline import (BudgetError, CcdReport, PipelineConfig, RecordSizes, ccd,
                       ccd_no_zero_toi, run_batched)

__version__ = "0.1.0"

__all__ = [
    "BROAD_PHASES", "BroadStats", "CandidatePair", "CandidateSet", "NarrowQueries", "NarrowQuery",
    "bf", "classify", "sap", "stq",
    "Aabb", "BoxSet", "PrimitiveId", "PrimitiveKind", "SceneError", "SceneStep", "build_boxes",
    "load_scene",
    "NO_COLLISION", "IntervalBox", "NarrowConfig", "QueueOverflow", "ToiResult", "inclusion_box",
    "narrow_phase", "process_interval", "split",
    "BudgetError", "CcdReport", "PipelineConfig", "RecordSizes", "ccd", "ccd_no_zero_toi",
    "run_batched",
]
