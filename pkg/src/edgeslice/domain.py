"""Topology, slices and the decision types of both timescales."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class BsKind(str, enum.Enum):
    MACRO = "macro"
    SMALL = "small"


class PlanShapeError(ValueError):
    """A plan whose array shapes don't match the topology/slice count."""


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: BsKind
    position: tuple[float, float]
    coverage_radius: float
    subcarriers: int
    vms: int

    def __post_init__(self):
        if self.coverage_radius <= 0:
            raise ValueError(f"BS {self.id}: coverage radius must be positive")
        if self.subcarriers < 1 or self.vms < 1:
            raise ValueError(f"BS {self.id}: capacities must be >= 1")

    @property
    def is_macro(self) -> bool:
        return self.kind == BsKind.MACRO

    def covers(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        d = np.hypot(xy[..., 0] - self.position[0], xy[..., 1] - self.position[1])
        return d <= self.coverage_radius


@dataclass(frozen=True)
class Topology:
    """Stations over a square area split into a rows x cols grid of regions.

    Station ids must equal their index in ``stations``.
    """

    stations: tuple[BaseStation, ...]
    area_side: float
    grid: tuple[int, int] = (4, 4)

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        for i, bs in enumerate(self.stations):
            if bs.id != i:
                raise ValueError("station ids must be 0..M-1 in order")
        if not any(bs.is_macro for bs in self.stations):
            raise ValueError("topology needs at least one macro station")
        if self.area_side <= 0 or min(self.grid) < 1:
            raise ValueError("bad area/grid")
        # corners plus a sampled lattice; exact for a single macro disk
        s = np.linspace(0.0, self.area_side, 41)
        pts = np.stack(np.meshgrid(s, s), axis=-1).reshape(-1, 2)
        covered = np.zeros(len(pts), dtype=bool)
        for bs in self.macro_stations:
            covered |= bs.covers(pts)
        if not covered.all():
            raise ValueError("macro stations do not cover the whole area")

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def macro_stations(self) -> list[BaseStation]:
        return [bs for bs in self.stations if bs.is_macro]

    @property
    def small_ids(self) -> list[int]:
        return [bs.id for bs in self.stations if not bs.is_macro]

    @property
    def macro_ids(self) -> list[int]:
        return [bs.id for bs in self.stations if bs.is_macro]

    @property
    def n_small(self) -> int:
        return len(self.small_ids)

    @property
    def n_regions(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def positions(self) -> np.ndarray:
        return np.array([bs.position for bs in self.stations], dtype=float)

    @property
    def subcarrier_caps(self) -> np.ndarray:
        return np.array([bs.subcarriers for bs in self.stations], dtype=np.int64)

    @property
    def vm_caps(self) -> np.ndarray:
        return np.array([bs.vms for bs in self.stations], dtype=np.int64)

    @property
    def macro_mask(self) -> np.ndarray:
        return np.array([bs.is_macro for bs in self.stations], dtype=bool)

    def region_bounds(self, j: int) -> tuple[float, float, float, float]:
        """(x0, x1, y0, y1) of region ``j`` (row-major)."""
        rows, cols = self.grid
        if not 0 <= j < rows * cols:
            raise IndexError(j)
        w = self.area_side / cols
        h = self.area_side / rows
        r, c = divmod(j, cols)
        return c * w, (c + 1) * w, r * h, (r + 1) * h

    def full_activation(self, o_small) -> np.ndarray:
        """Per-station activation with macros fixed to 1."""
        o = np.ones(self.n_stations, dtype=np.int64)
        o[self.small_ids] = np.asarray(o_small, dtype=np.int64)
        return o

    def associate(self, xy) -> np.ndarray:
        """Nearest covering station for each point (ties -> lowest id)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        pos = self.positions
        d = np.hypot(xy[:, None, 0] - pos[None, :, 0], xy[:, None, 1] - pos[None, :, 1])
        radii = np.array([bs.coverage_radius for bs in self.stations])
        d = np.where(d <= radii[None, :], d, np.inf)
        return np.argmin(d, axis=1)

    def nearest_macro(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        ids = np.array(self.macro_ids)
        pos = self.positions[ids]
        d = np.hypot(xy[:, None, 0] - pos[None, :, 0], xy[:, None, 1] - pos[None, :, 1])
        return ids[np.argmin(d, axis=1)]

    def fallback_macro(self) -> np.ndarray:
        """For each station, the macro that absorbs it when it is unavailable."""
        fb = self.nearest_macro(self.positions)
        fb[self.macro_ids] = self.macro_ids
        return fb


@dataclass(frozen=True)
class SliceSpec:
    id: int
    task_size: float  # bits
    compute_intensity: float  # cycles/bit
    deadline: float  # s
    soft_deadline: float  # s
    arrival_rate: float  # tasks per vehicle per second

    def __post_init__(self):
        if self.task_size <= 0 or self.compute_intensity <= 0:
            raise ValueError(f"slice {self.id}: task size and intensity must be positive")
        if not 0 < self.soft_deadline < self.deadline:
            raise ValueError(f"slice {self.id}: need 0 < soft_deadline < deadline")
        if self.arrival_rate < 0:
            raise ValueError(f"slice {self.id}: negative arrival rate")


@dataclass(frozen=True)
class PlanningDecision:
    """One window's plan.

    ``activation`` has one flag per small station, ``spectrum`` and ``compute``
    are K x M integer arrays, ``cloud`` has one VM count per slice.
    """

    activation: np.ndarray
    spectrum: np.ndarray
    compute: np.ndarray
    cloud: np.ndarray

    def __post_init__(self):
        for name in ("activation", "spectrum", "compute", "cloud"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_slices(self) -> int:
        return self.spectrum.shape[0]

    def key(self) -> tuple[int, ...]:
        """Lexicographic ordering key: o, then B and C row-major, then h."""
        return tuple(
            int(v)
            for v in np.concatenate(
                [self.activation, self.spectrum.ravel(), self.compute.ravel(), self.cloud]
            )
        )

    def __eq__(self, other):
        if not isinstance(other, PlanningDecision):
            return NotImplemented
        return (
            self.spectrum.shape == other.spectrum.shape
            and self.activation.shape == other.activation.shape
            and self.key() == other.key()
        )

    def __hash__(self):
        return hash((self.spectrum.shape, self.key()))

    def to_dict(self) -> dict:
        return {
            "activation": self.activation.tolist(),
            "spectrum": self.spectrum.tolist(),
            "compute": self.compute.tolist(),
            "cloud": self.cloud.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanningDecision":
        return cls(d["activation"], d["spectrum"], d["compute"], d["cloud"])

    @classmethod
    def minimal(cls, topo: Topology, n_slices: int) -> "PlanningDecision":
        """All small stations off, no edge resources, one cloud VM per slice."""
        M = topo.n_stations
        return cls(
            np.zeros(topo.n_small, dtype=np.int64),
            np.zeros((n_slices, M), dtype=np.int64),
            np.zeros((n_slices, M), dtype=np.int64),
            np.ones(n_slices, dtype=np.int64),
        )


@dataclass
class OperationDecision:
    """Per-slot decisions.

    ``fractions[k]`` holds one spectrum fraction per vehicle of the slot (0 for
    vehicles that are served elsewhere); ``dispatch`` is K x M.
    """

    fractions: np.ndarray
    dispatch: np.ndarray


@dataclass
class QueueState:
    backlog: np.ndarray  # K x M, bits

    def __post_init__(self):
        self.backlog = np.asarray(self.backlog, dtype=float)
        if (self.backlog < 0).any():
            raise ValueError("negative backlog")

    @classmethod
    def zeros(cls, n_slices: int, n_stations: int) -> "QueueState":
        return cls(np.zeros((n_slices, n_stations)))

    def copy(self) -> "QueueState":
        return QueueState(self.backlog.copy())


def validate_plan(plan: PlanningDecision, topo: Topology, n_slices: int | None = None) -> list[str]:
    """Return the list of violated plan constraints (empty when feasible).

    Raises PlanShapeError for dimension mismatches.
    """
    K = plan.spectrum.shape[0] if n_slices is None else n_slices
    M = topo.n_stations
    if plan.activation.shape != (topo.n_small,):
        raise PlanShapeError(f"activation shape {plan.activation.shape} != ({topo.n_small},)")
    for name in ("spectrum", "compute"):
        shape = getattr(plan, name).shape
        if shape != (K, M):
            raise PlanShapeError(f"{name} shape {shape} != ({K}, {M})")
    if plan.cloud.shape != (K,):
        raise PlanShapeError(f"cloud shape {plan.cloud.shape} != ({K},)")

    out = []
    for i, m in enumerate(topo.small_ids):
        if plan.activation[i] not in (0, 1):
            out.append(f"non-binary activation at {m}")
    if (plan.spectrum < 0).any() or (plan.compute < 0).any():
        out.append("negative edge resource")
    o = topo.full_activation(np.clip(plan.activation, 0, 1))
    for m, bs in enumerate(topo.stations):
        if o[m]:
            if plan.spectrum[:, m].sum() > bs.subcarriers:
                out.append(f"spectrum capacity at {m}")
            if plan.compute[:, m].sum() > bs.vms:
                out.append(f"compute capacity at {m}")
        elif plan.spectrum[:, m].any() or plan.compute[:, m].any():
            out.append(f"resource on inactive BS {m}")
    if (plan.cloud < 1).any():
        out.append("cloud VMs below 1")
    return out


def _largest_remainder(target: np.ndarray, total: int) -> np.ndarray:
    """Integer vector summing to ``total`` closest (L1) to ``target``; ties -> lower index."""
    base = np.floor(target).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        rem = target - base
        order = np.lexsort((np.arange(len(target)), -rem))
        base[order[:short]] += 1
    return base


def project_plan(
    raw,
    topo: Topology,
    n_slices: int,
    cloud_max: int,
) -> PlanningDecision:
    """Map a real vector in plan units onto the nearest feasible integer plan.

    Layout of ``raw``: M_s activation scores, K*M spectrum, K*M compute and K
    cloud values, all row-major. Activation is thresholded at 0.5; the rest are
    clipped to [0, cap], rounded, and per-station overflows are rescaled with
    largest-remainder rounding.
    """
    raw = np.asarray(raw, dtype=float).ravel()
    K, M, Ms = n_slices, topo.n_stations, topo.n_small
    expected = Ms + 2 * K * M + K
    if raw.size != expected:
        raise PlanShapeError(f"raw action has length {raw.size}, expected {expected}")
    raw = np.nan_to_num(raw, nan=0.0)

    o_small = (raw[:Ms] >= 0.5).astype(np.int64)
    o = topo.full_activation(o_small)
    b_raw = raw[Ms : Ms + K * M].reshape(K, M)
    c_raw = raw[Ms + K * M : Ms + 2 * K * M].reshape(K, M)
    h_raw = raw[Ms + 2 * K * M :]

    def fit(values, caps):
        out = np.zeros((K, M), dtype=np.int64)
        for m in range(M):
            if not o[m]:
                continue
            col = np.clip(values[:, m], 0.0, caps[m])
            ints = np.rint(col).astype(np.int64)
            if ints.sum() > caps[m]:
                target = col * caps[m] / col.sum()
                ints = _largest_remainder(target, int(caps[m]))
            out[:, m] = ints
        return out

    spectrum = fit(b_raw, topo.subcarrier_caps)
    compute = fit(c_raw, topo.vm_caps)
    cloud = np.clip(np.rint(np.clip(h_raw, 1.0, cloud_max)), 1, cloud_max).astype(np.int64)
    return PlanningDecision(o_small, spectrum, compute, cloud)


def plan_to_raw(plan: PlanningDecision) -> np.ndarray:
    """Inverse layout of project_plan for integer plans."""
    return np.concatenate(
        [plan.activation, plan.spectrum.ravel(), plan.compute.ravel(), plan.cloud]
    ).astype(float)
