"""Slicing cost: deployment, provisioning, adjustment and SLA revenue."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import PlanningDecision, SliceSpec, Topology

SLA_RAMPS = ("as_printed", "decreasing")


@dataclass(frozen=True)
class CostParams:
    q_d: float = 1.0  # per activated small station and window
    q_r: float = 0.1  # per reserved resource unit and window
    q_s: float = 0.5  # per unit of resource increase
    q_b: float = 5.0  # revenue per slice meeting its SLA
    q_p: float = 10.0  # penalty per slice violating its SLA
    sla_ramp: str = "as_printed"

    def __post_init__(self):
        for name in ("q_d", "q_r", "q_s", "q_b", "q_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.q_p <= self.q_b:
            raise ValueError("penalty q_p must exceed revenue q_b")
        if self.sla_ramp not in SLA_RAMPS:
            raise ValueError(f"sla_ramp must be one of {SLA_RAMPS}")


@dataclass(frozen=True)
class CostBreakdown:
    deployment: float
    provisioning: float
    adjustment: float
    sla_revenue: float

    @property
    def total(self) -> float:
        # fixed order: ((deployment + provisioning) + adjustment) - revenue
        return self.deployment + self.provisioning + self.adjustment - self.sla_revenue

    def row(self) -> list[float]:
        return [self.deployment, self.provisioning, self.adjustment, self.sla_revenue, self.total]


def deployment_cost(plan: PlanningDecision, params: CostParams) -> float:
    return params.q_d * float(plan.activation.sum())


def provisioning_cost(plan: PlanningDecision, params: CostParams, topo: Topology) -> float:
    o = topo.full_activation(plan.activation)
    units = plan.cloud.sum() + (o[None, :] * plan.spectrum).sum() + (o[None, :] * plan.compute).sum()
    return params.q_r * float(units)


def adjustment_cost(plan: PlanningDecision, prev: PlanningDecision, params: CostParams,
                    topo: Topology) -> float:
    """Price of resource increases on stations deployed in both windows.

    Macro stations count as always deployed; cloud VMs are always gated on.
    """
    kept = topo.full_activation(prev.activation) * topo.full_activation(plan.activation)
    up = lambda new, old: np.maximum(new - old, 0)  # noqa: E731
    units = up(plan.cloud, prev.cloud).sum()
    units += (kept[None, :] * (up(plan.spectrum, prev.spectrum) + up(plan.compute, prev.compute))).sum()
    return params.q_s * float(units)


def sla_revenue(delay: float, sl: SliceSpec, params: CostParams) -> float:
    lo, hi = sl.soft_deadline, sl.deadline
    if delay < lo:
        return params.q_b
    if delay <= hi:
        if params.sla_ramp == "as_printed":
            return params.q_b * (delay - lo) / (hi - lo)
        return params.q_b * (hi - delay) / (hi - lo)
    return -params.q_p


def sla_revenue_array(delay: np.ndarray, sl: SliceSpec, params: CostParams) -> np.ndarray:
    """Vectorised ``sla_revenue``; NaN-free for inf delays."""
    d = np.asarray(delay, dtype=float)
    lo, hi = sl.soft_deadline, sl.deadline
    if params.sla_ramp == "as_printed":
        mid = params.q_b * (d - lo) / (hi - lo)
    else:
        mid = params.q_b * (hi - d) / (hi - lo)
    return np.where(d < lo, params.q_b, np.where(d <= hi, mid, -params.q_p))


def window_cost(plan: PlanningDecision, prev: PlanningDecision | None, mean_delay: Sequence[float],
                slices: Sequence[SliceSpec], params: CostParams, topo: Topology,
                *, include_adjustment: bool = True) -> CostBreakdown:
    phi_s = adjustment_cost(plan, prev, params, topo) if (include_adjustment and prev is not None) else 0.0
    revenue = 0.0
    for d, sl in zip(mean_delay, slices):
        revenue += sla_revenue(float(d), sl, params)
    return CostBreakdown(deployment_cost(plan, params), provisioning_cost(plan, params, topo),
                         phi_s, revenue)
