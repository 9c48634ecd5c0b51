"""One planning window per MDP step: state encoding, action decoding, reward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Scenario
from .cost import CostBreakdown, window_cost
from .domain import PlanningDecision, QueueState, plan_to_raw, project_plan, validate_plan
from .operation import WindowResult, run_window
from .traffic import DensityMap, WindowTraffic, gen_density, sample_window


def state_dim(scenario: Scenario) -> int:
    K, M, J = scenario.n_slices, scenario.topology.n_stations, scenario.topology.n_regions
    return 2 * K * M + M + K + J


def action_dim(scenario: Scenario) -> int:
    K, M = scenario.n_slices, scenario.topology.n_stations
    return scenario.topology.n_small + 2 * K * M + K


def encode_state(density: DensityMap, prev: PlanningDecision, scenario: Scenario) -> np.ndarray:
    """[density ; activation incl. macros ; B ; C ; h], each block scaled into [0, 1]."""
    topo = scenario.topology
    h_span = max(scenario.cloud_vm_max - 1, 1)
    parts = [
        density.values / scenario.density_max,
        topo.full_activation(prev.activation).astype(float),
        (prev.spectrum / topo.subcarrier_caps[None, :]).ravel(),
        (prev.compute / topo.vm_caps[None, :]).ravel(),
        (prev.cloud - 1) / h_span,
    ]
    return np.clip(np.concatenate(parts), 0.0, 1.0)


def action_to_raw(action, scenario: Scenario) -> np.ndarray:
    """Affine map of a [-1, 1] action onto plan units (activation in [0, 1])."""
    topo = scenario.topology
    K, M, Ms = scenario.n_slices, topo.n_stations, topo.n_small
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    if a.size != action_dim(scenario):
        raise ValueError(f"action has length {a.size}, expected {action_dim(scenario)}")
    u = (a + 1.0) / 2.0
    raw = u.copy()
    raw[Ms:Ms + K * M] *= np.tile(topo.subcarrier_caps, K)
    raw[Ms + K * M:Ms + 2 * K * M] *= np.tile(topo.vm_caps, K)
    raw[Ms + 2 * K * M:] = 1.0 + u[Ms + 2 * K * M:] * (scenario.cloud_vm_max - 1)
    return raw


def plan_to_action(plan: PlanningDecision, scenario: Scenario) -> np.ndarray:
    topo = scenario.topology
    K, M, Ms = scenario.n_slices, topo.n_stations, topo.n_small
    raw = plan_to_raw(plan)
    u = raw.copy()
    u[Ms:Ms + K * M] /= np.tile(topo.subcarrier_caps, K)
    u[Ms + K * M:Ms + 2 * K * M] /= np.tile(topo.vm_caps, K)
    u[Ms + 2 * K * M:] = (raw[Ms + 2 * K * M:] - 1.0) / max(scenario.cloud_vm_max - 1, 1)
    return 2.0 * u - 1.0


def decode_action(action, scenario: Scenario) -> PlanningDecision:
    return project_plan(action_to_raw(action, scenario), scenario.topology, scenario.n_slices,
                        scenario.cloud_vm_max)


@dataclass
class StepResult:
    reward: float
    state: np.ndarray
    cost: CostBreakdown
    mean_delay: np.ndarray
    plan: PlanningDecision
    window: int
    done: bool
    result: WindowResult


class SlicingEnv:
    """Episode = one slice lifecycle of ``scenario.windows`` planning windows.

    All randomness (densities, vehicles, gains, arrivals) comes from one
    generator seeded in ``reset`` and never depends on the actions, so equal
    seeds give equal traffic for any policy.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.state_dim = state_dim(scenario)
        self.action_dim = action_dim(scenario)
        self.rng = np.random.default_rng(0)
        self.window = 1
        self.queues = QueueState.zeros(scenario.n_slices, scenario.topology.n_stations)
        self.prev_plan = scenario.start_plan()
        self.density = self._density(1)

    def _density(self, w: int) -> DensityMap:
        sc = self.scenario
        if sc.trace is not None:
            d = sc.trace[(w - 1) % len(sc.trace)]
            return DensityMap(w, d.values)
        return gen_density(w, sc.pattern, self.rng)

    def reset(self, seed: int) -> np.ndarray:
        sc = self.scenario
        self.rng = np.random.default_rng(seed)
        self.window = 1
        self.queues = QueueState.zeros(sc.n_slices, sc.topology.n_stations)
        self.prev_plan = sc.start_plan()
        self.density = self._density(1)
        return self.state()

    def state(self) -> np.ndarray:
        return encode_state(self.density, self.prev_plan, self.scenario)

    def sample_traffic(self, density: DensityMap, rng: np.random.Generator) -> WindowTraffic:
        sc = self.scenario
        return sample_window(density, sc.topology, sc.slices, sc.slots_per_window, rng,
                             shadowing_db=sc.shadowing_db, slot_seconds=sc.compute.slot_seconds,
                             backbone_rtt=sc.backbone_rtt, rtt_jitter=sc.rtt_jitter)

    def evaluate_plan(self, plan: PlanningDecision, traffic: WindowTraffic,
                      queues: QueueState | None = None, prev: PlanningDecision | None = None,
                      include_adjustment: bool = True) -> tuple[CostBreakdown, WindowResult]:
        """Cost of ``plan`` on a given traffic sample, without touching env state."""
        sc = self.scenario
        queues = self.queues if queues is None else queues
        prev = self.prev_plan if prev is None else prev
        res = run_window(plan, traffic, queues, sc.slices, sc.radio, sc.compute, sc.topology)
        cost = window_cost(plan, prev, res.mean_delay, sc.slices, sc.cost, sc.topology,
                           include_adjustment=include_adjustment)
        return cost, res

    def step(self, action) -> StepResult:
        return self.step_plan(decode_action(action, self.scenario))

    def step_plan(self, plan: PlanningDecision) -> StepResult:
        sc = self.scenario
        if self.window > sc.windows:
            raise RuntimeError("episode finished; call reset()")
        problems = validate_plan(plan, sc.topology, sc.n_slices)
        if problems:
            raise ValueError(f"infeasible plan: {problems}")
        traffic = self.sample_traffic(self.density, self.rng)
        cost, res = self.evaluate_plan(plan, traffic)
        self.queues = res.queues_out
        self.prev_plan = plan
        w = self.window
        self.window += 1
        self.density = self._density(self.window)
        return StepResult(-cost.total, self.state(), cost, res.mean_delay, plan, w,
                          w == sc.windows, res)
