"""Committee-based BFT consensus with whole-committee view change, plus a simulator."""

from __future__ import annotations

from .committee import (
    CommitteeSelection, failure_probability, min_committee_size, select_committee,
)
from .sim import (
    RunMetrics, SafetyViolation, SimulationConfig, compare_with_pbft, count_messages,
    run_simulation,
)

__all__ = [
    "CommitteeSelection", "failure_probability", "min_committee_size", "select_committee",
    "RunMetrics", "SafetyViolation", "SimulationConfig", "compare_with_pbft",
    "count_messages", "run_simulation",
]
