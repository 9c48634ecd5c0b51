"""Experiment configuration: JSON document <-> typed scenario objects.

Defaults reproduce the simulation table of the two-slice, three-station setup;
cost prices, arrival rates, the density pattern and all agent settings are
assumptions (see docs/config.md).
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .cost import CostParams
from .ddpg import AgentConfig
from .domain import BaseStation, BsKind, PlanningDecision, SliceSpec, Topology
from .operation import ComputeParams, RadioParams
from .traffic import DensityMap, DensityPattern, load_trace


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG: dict[str, Any] = {
    "topology": {
        "area_side": 1000.0,
        "grid": [4, 4],
        "stations": [
            {"id": 0, "kind": "macro", "position": [500.0, 500.0], "coverage_radius": 710.0,
             "subcarriers": 10, "vms": 10},
            {"id": 1, "kind": "small", "position": [250.0, 250.0], "coverage_radius": 300.0,
             "subcarriers": 10, "vms": 10},
            {"id": 2, "kind": "small", "position": [750.0, 750.0], "coverage_radius": 300.0,
             "subcarriers": 10, "vms": 10},
        ],
    },
    "slices": [
        {"id": 0, "task_size": 0.6e6, "compute_intensity": 1000.0, "deadline": 0.100,
         "soft_deadline": 0.050, "arrival_rate": 2.0},
        {"id": 1, "task_size": 2.0e6, "compute_intensity": 200.0, "deadline": 0.200,
         "soft_deadline": 0.100, "arrival_rate": 2.0},
    ],
    "radio": {"subcarrier_bandwidth": 20e6, "noise_density_dbm": -174.0,
              "interference_density_dbm": -164.0, "tx_power_dbm": 27.0, "shadowing_db": 8.0},
    "compute": {"edge_vm_hz": 10e9, "cloud_vm_hz": 100e9, "backbone_rtt": 0.15,
                "rtt_jitter": 0.0, "cloud_vm_max": 4},
    "cost": {"q_d": 1.0, "q_r": 0.1, "q_s": 0.5, "q_b": 5.0, "q_p": 10.0, "sla_ramp": "as_printed"},
    "traffic": {
        "pattern": {"base": 0.6, "amplitude": 0.4, "period": 24.0, "phase": 0.0, "noise": 0.05},
        "trace": None,
        "density_max": 2.0,
    },
    "timescales": {"slot_seconds": 1.0, "window_seconds": 600.0, "slots_per_window": 60,
                   "windows": 24},
    "agent": {},
    "baseline": {"spectrum_step": 2, "compute_step": 2, "cloud_values": [1, 2, 4]},
    "training": {"episodes": 300, "seed": 0},
    "evaluation": {"seeds": [101, 102, 103, 104, 105], "arrival_rates": [1.0, 2.0, 3.0]},
    "initial_plan": None,
    "output_dir": "runs/default",
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("agent",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class Scenario:
    """Everything the environment and the planners need to simulate windows."""

    topology: Topology
    slices: tuple[SliceSpec, ...]
    radio: RadioParams
    compute: ComputeParams
    cost: CostParams
    slots_per_window: int
    windows: int
    cloud_vm_max: int
    density_max: float
    shadowing_db: float = 8.0
    backbone_rtt: float = 0.15
    rtt_jitter: float = 0.0
    pattern: DensityPattern | None = None
    trace: tuple[DensityMap, ...] | None = None
    initial_plan: PlanningDecision | None = None

    def __post_init__(self):
        if (self.pattern is None) == (self.trace is None):
            raise ConfigError("exactly one of pattern / trace must be given")
        J = self.topology.n_regions
        if self.pattern is not None and self.pattern.n_regions != J:
            raise ConfigError(f"pattern has {self.pattern.n_regions} regions, topology {J}")
        if self.trace is not None:
            if any(d.values.size != J for d in self.trace):
                raise ConfigError("trace region count does not match topology")
            if len(self.trace) < self.windows:
                raise ConfigError("trace shorter than the number of windows")
        if self.slots_per_window < 1 or self.windows < 1:
            raise ConfigError("need at least one slot and one window")
        if self.cloud_vm_max < 1 or self.density_max <= 0:
            raise ConfigError("cloud_vm_max >= 1 and density_max > 0 required")

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    def start_plan(self) -> PlanningDecision:
        if self.initial_plan is not None:
            return self.initial_plan
        return PlanningDecision.minimal(self.topology, self.n_slices)

    def with_arrival_rate(self, rate: float) -> "Scenario":
        return replace(self, slices=tuple(replace(s, arrival_rate=float(rate)) for s in self.slices))


@dataclass
class BaselineGridConfig:
    spectrum_step: int = 2
    compute_step: int = 2
    cloud_values: tuple[int, ...] = (1, 2, 4)


@dataclass
class ExperimentConfig:
    scenario: Scenario
    agent: AgentConfig
    baseline: BaselineGridConfig
    episodes: int
    seed: int
    eval_seeds: tuple[int, ...]
    eval_arrival_rates: tuple[float, ...]
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def build_topology(d: dict) -> Topology:
    stations = []
    for s in d["stations"]:
        try:
            kind = BsKind(str(s["kind"]).lower())
        except ValueError as exc:
            raise ConfigError(f"unknown station kind {s['kind']!r}") from exc
        stations.append(BaseStation(int(s["id"]), kind, tuple(map(float, s["position"])),
                                    float(s["coverage_radius"]), int(s["subcarriers"]), int(s["vms"])))
    return Topology(tuple(stations), float(d["area_side"]), tuple(int(g) for g in d["grid"]))


def build_scenario(raw: dict, base_dir: Path | None = None) -> Scenario:
    try:
        topo = build_topology(raw["topology"])
        slices = tuple(
            SliceSpec(int(s["id"]), float(s["task_size"]), float(s["compute_intensity"]),
                      float(s["deadline"]), float(s["soft_deadline"]), float(s["arrival_rate"]))
            for s in raw["slices"]
        )
        r = dict(raw["radio"])
        shadowing = float(r.pop("shadowing_db", 8.0))
        radio = RadioParams(**{k: float(v) for k, v in r.items()})
        c = raw["compute"]
        ts = raw["timescales"]
        slot_s = float(ts["slot_seconds"])
        win_s = float(ts["window_seconds"])
        ratio = win_s / slot_s
        if slot_s <= 0 or ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("window_seconds / slot_seconds must be a positive integer")
        slots = ts.get("slots_per_window")
        slots = int(round(ratio)) if slots is None else int(slots)
        compute = ComputeParams(float(c["edge_vm_hz"]), float(c["cloud_vm_hz"]), slot_s)
        cost = CostParams(**raw["cost"])
        tr = raw["traffic"]
        pattern = trace = None
        if tr.get("trace"):
            path = Path(tr["trace"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            trace = tuple(load_trace(path, topo.n_regions))
        else:
            p = tr["pattern"]
            J = topo.n_regions
            per_region = []
            for name in ("base", "amplitude", "phase"):
                arr = np.atleast_1d(np.asarray(p[name], dtype=float))
                if arr.size == 1:
                    arr = np.full(J, arr[0])
                per_region.append(arr)
            pattern = DensityPattern(*per_region[:2], float(p["period"]), per_region[2],
                                     float(p.get("noise", 0.0)))
        init = raw.get("initial_plan")
        return Scenario(
            topology=topo,
            slices=slices,
            radio=radio,
            compute=compute,
            cost=cost,
            slots_per_window=slots,
            windows=int(ts["windows"]),
            cloud_vm_max=int(c.get("cloud_vm_max", 4)),
            density_max=float(tr.get("density_max", 10.0)),
            shadowing_db=shadowing,
            backbone_rtt=float(c["backbone_rtt"]),
            rtt_jitter=float(c.get("rtt_jitter", 0.0)),
            pattern=pattern,
            trace=trace,
            initial_plan=PlanningDecision.from_dict(init) if init else None,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from exc


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(DEFAULT_CONFIG)
    base_dir = None
    if path is not None:
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            raw = _merge(raw, json.load(fh))
        base_dir = path.parent
    if overrides:
        raw = _merge(raw, overrides)
    return config_from_dict(raw, base_dir)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    raw = _merge(DEFAULT_CONFIG, raw)
    scenario = build_scenario(raw, base_dir)
    try:
        agent = AgentConfig(**raw.get("agent", {}))
    except TypeError as exc:
        raise ConfigError(f"bad agent config: {exc}") from exc
    b = raw["baseline"]
    grid = BaselineGridConfig(int(b["spectrum_step"]), int(b["compute_step"]),
                              tuple(int(h) for h in b["cloud_values"]))
    if grid.spectrum_step < 1 or grid.compute_step < 1 or not grid.cloud_values:
        raise ConfigError("baseline grid steps must be >= 1 with at least one cloud value")
    tr = raw["training"]
    ev = raw["evaluation"]
    episodes = int(tr["episodes"])
    if episodes < 0:
        raise ConfigError("episodes must be >= 0")
    return ExperimentConfig(
        scenario=scenario,
        agent=agent,
        baseline=grid,
        episodes=episodes,
        seed=int(tr["seed"]),
        eval_seeds=tuple(int(s) for s in ev["seeds"]),
        eval_arrival_rates=tuple(float(r) for r in ev["arrival_rates"]),
        output_dir=str(raw["output_dir"]),
        raw=raw,
    )


def default_config(**overrides) -> ExperimentConfig:
    return config_from_dict(overrides)


def agent_config_dict(cfg: AgentConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(d["hidden"])
    return d
