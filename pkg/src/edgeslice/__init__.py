"""Two-timescale network slicing simulator with a learned planner and a myopic baseline."""
from .domain import OperationDecision, PlanningDecision, QueueState, SliceSpec, Topology
from .kernels import BACKEND

__all__ = ["BACKEND", "OperationDecision", "PlanningDecision", "QueueState", "SliceSpec", "Topology"]
__version__ = "0.1.0"
