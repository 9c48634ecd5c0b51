"""Vehicle density, per-slot populations, channel gains and task arrivals."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import SliceSpec, Topology


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class DensityMap:
    window: int
    values: np.ndarray  # mean vehicle count per region

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or (v < 0).any() or not np.isfinite(v).all():
            raise ValueError("density must be a finite non-negative vector")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DensityPattern:
    """Diurnal-style synthetic density: base + amp*sin(2*pi*w/period + phase) + noise."""

    base: np.ndarray
    amplitude: np.ndarray
    period: float
    phase: np.ndarray
    noise: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("density period must be positive")
        if self.noise < 0:
            raise ValueError("noise scale must be non-negative")
        base = np.atleast_1d(np.asarray(self.base, dtype=float))
        J = base.size
        for name in ("base", "amplitude", "phase"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.size == 1:
                arr = np.full(J, arr[0])
            if arr.size != J:
                raise ValueError(f"pattern field {name} has length {arr.size}, expected {J}")
            object.__setattr__(self, name, arr)

    @property
    def n_regions(self) -> int:
        return self.base.size


def gen_density(window: int, pattern: DensityPattern, rng: np.random.Generator) -> DensityMap:
    angle = 2.0 * np.pi * window / pattern.period + pattern.phase
    lam = pattern.base + pattern.amplitude * np.sin(angle)
    if pattern.noise > 0:
        lam = lam + rng.normal(0.0, pattern.noise, size=lam.shape)
    return DensityMap(window, np.maximum(lam, 0.0))


def load_trace(path, n_regions: int | None = None) -> list[DensityMap]:
    """Read a ``window,region,density`` CSV into one DensityMap per window."""
    cells: dict[int, dict[int, float]] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["window", "region", "density"]:
            raise TraceError(f"{path}: expected header window,region,density")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceError(f"{path}:{lineno}: malformed row {row!r}")
            try:
                w, j, dens = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise TraceError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if not np.isfinite(dens) or dens < 0:
                raise TraceError(f"{path}:{lineno}: invalid density {dens}")
            if j < 0 or (n_regions is not None and j >= n_regions):
                raise TraceError(f"{path}:{lineno}: region {j} out of range")
            if j in cells.setdefault(w, {}):
                raise TraceError(f"{path}:{lineno}: duplicate cell ({w}, {j})")
            cells[w][j] = dens
    if not cells:
        raise TraceError(f"{path}: no data rows")
    J = n_regions if n_regions is not None else 1 + max(max(c) for c in cells.values())
    out = []
    for w in sorted(cells):
        row = cells[w]
        if len(row) != J:
            missing = sorted(set(range(J)) - set(row))
            raise TraceError(f"{path}: incomplete window {w}, missing regions {missing}")
        out.append(DensityMap(w, np.array([row[j] for j in range(J)])))
    return out


def path_loss_db(distance_m) -> np.ndarray:
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    return 128.1 + 37.6 * np.log10(d / 1000.0)


def channel_gain(vehicle_pos, bs_pos, rng: np.random.Generator | None, shadowing_db: float = 8.0):
    """Linear gain under log-distance path loss with log-normal shadowing."""
    vp = np.asarray(vehicle_pos, dtype=float)
    bp = np.asarray(bs_pos, dtype=float)
    d = np.hypot(vp[..., 0] - bp[..., 0], vp[..., 1] - bp[..., 1])
    pl = path_loss_db(d)
    if shadowing_db > 0:
        pl = pl + rng.normal(0.0, shadowing_db, size=np.shape(pl))
    return 10.0 ** (-pl / 10.0)


@dataclass
class VehicleSet:
    """Vehicles of one slot: positions and their serving/fallback stations."""

    position: np.ndarray  # (n, 2)
    station: np.ndarray  # nearest covering station
    fallback: np.ndarray  # nearest macro station

    def __len__(self):
        return len(self.station)


def _place(counts: np.ndarray, topo: Topology, rng: np.random.Generator) -> np.ndarray:
    """Uniform positions inside each region; counts indexed by region (flattened ok)."""
    rows, cols = topo.grid
    J = rows * cols
    region = np.repeat(np.tile(np.arange(J), counts.size // J), counts.ravel())
    u = rng.random((region.size, 2))
    r, c = np.divmod(region, cols)
    w = topo.area_side / cols
    h = topo.area_side / rows
    return np.column_stack([(c + u[:, 0]) * w, (r + u[:, 1]) * h])


def spawn_vehicles(density: DensityMap, topo: Topology, rng: np.random.Generator) -> VehicleSet:
    if density.values.size != topo.n_regions:
        raise ValueError("density/topology region count mismatch")
    counts = rng.poisson(density.values)
    pos = _place(counts, topo, rng)
    if len(pos) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return VehicleSet(pos.reshape(0, 2), empty, empty.copy())
    return VehicleSet(pos, topo.associate(pos), topo.nearest_macro(pos))


def sample_arrivals(n_vehicles: int, slices: Sequence[SliceSpec], rng: np.random.Generator,
                    slot_seconds: float = 1.0) -> np.ndarray:
    """Poisson task counts, shape (K, n)."""
    lam = np.array([s.arrival_rate for s in slices], dtype=float) * slot_seconds
    if (lam < 0).any():
        raise ValueError("negative arrival rate")
    return rng.poisson(lam[:, None], size=(len(slices), n_vehicles)).astype(np.int64)


def aggregate(arrivals: np.ndarray, station: np.ndarray, n_stations: int) -> np.ndarray:
    """A[k, m] = sum of a[k, n] over vehicles n attached to m."""
    K = arrivals.shape[0]
    out = np.zeros((K, n_stations), dtype=np.int64)
    for k in range(K):
        out[k] = np.bincount(station, weights=arrivals[k], minlength=n_stations).astype(np.int64)
    return out


@dataclass
class SlotObservation:
    t: int
    position: np.ndarray
    station: np.ndarray
    fallback: np.ndarray
    gain: np.ndarray  # gain towards ``station``
    gain_fallback: np.ndarray  # gain towards ``fallback``
    arrivals: np.ndarray  # (K, n)
    aggregates: np.ndarray  # (K, M), by ``station``
    backbone_rtt: float

    @property
    def n_vehicles(self) -> int:
        return len(self.station)

    def vehicles_at(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.station == m)


@dataclass
class WindowTraffic:
    """All slots of one window, vehicles concatenated in slot order."""

    n_slots: int
    n_stations: int
    slot: np.ndarray
    position: np.ndarray
    station: np.ndarray
    fallback: np.ndarray
    gain: np.ndarray
    gain_fallback: np.ndarray
    arrivals: np.ndarray  # (K, n)
    backbone_rtt: np.ndarray  # (T,)

    @property
    def n_slices(self) -> int:
        return self.arrivals.shape[0]

    def observation(self, t: int) -> SlotObservation:
        idx = np.flatnonzero(self.slot == t)
        arr = self.arrivals[:, idx]
        st = self.station[idx]
        return SlotObservation(
            t=t,
            position=self.position[idx],
            station=st,
            fallback=self.fallback[idx],
            gain=self.gain[idx],
            gain_fallback=self.gain_fallback[idx],
            arrivals=arr,
            aggregates=aggregate(arr, st, self.n_stations),
            backbone_rtt=float(self.backbone_rtt[t]),
        )

    def with_arrivals(self, arrivals: np.ndarray) -> "WindowTraffic":
        return WindowTraffic(self.n_slots, self.n_stations, self.slot, self.position,
                             self.station, self.fallback, self.gain, self.gain_fallback,
                             np.asarray(arrivals, dtype=np.int64), self.backbone_rtt)

    @classmethod
    def from_observations(cls, obs: Sequence[SlotObservation], n_stations: int) -> "WindowTraffic":
        """Stack scripted per-slot observations (slot index = position in ``obs``)."""
        K = obs[0].arrivals.shape[0]
        cat = lambda name: np.concatenate([getattr(o, name) for o in obs])  # noqa: E731
        return cls(
            n_slots=len(obs),
            n_stations=n_stations,
            slot=np.concatenate([np.full(o.n_vehicles, t, dtype=np.int64) for t, o in enumerate(obs)]),
            position=np.concatenate([o.position.reshape(-1, 2) for o in obs]),
            station=cat("station").astype(np.int64),
            fallback=cat("fallback").astype(np.int64),
            gain=cat("gain").astype(float),
            gain_fallback=cat("gain_fallback").astype(float),
            arrivals=np.concatenate([o.arrivals.reshape(K, -1) for o in obs], axis=1).astype(np.int64),
            backbone_rtt=np.array([o.backbone_rtt for o in obs], dtype=float),
        )


def sample_window(
    density: DensityMap,
    topo: Topology,
    slices: Sequence[SliceSpec],
    n_slots: int,
    rng: np.random.Generator,
    *,
    shadowing_db: float = 8.0,
    slot_seconds: float = 1.0,
    backbone_rtt: float = 0.15,
    rtt_jitter: float = 0.0,
) -> WindowTraffic:
    """Draw vehicles, gains and arrivals for every slot of a window.

    Vehicles are redrawn independently each slot from the window density.
    """
    if density.values.size != topo.n_regions:
        raise ValueError("density/topology region count mismatch")
    counts = rng.poisson(density.values, size=(n_slots, topo.n_regions))
    slot = np.repeat(np.arange(n_slots), counts.sum(axis=1))
    pos = _place(counts, topo, rng)
    n = len(pos)
    if n:
        station = topo.associate(pos)
        fallback = topo.nearest_macro(pos)
    else:
        station = np.zeros(0, dtype=np.int64)
        fallback = np.zeros(0, dtype=np.int64)
    bs_pos = topo.positions
    gain = channel_gain(pos, bs_pos[station], rng, shadowing_db)
    gain_fb = channel_gain(pos, bs_pos[fallback], rng, shadowing_db)
    gain_fb = np.where(station == fallback, gain, gain_fb)
    arrivals = sample_arrivals(n, slices, rng, slot_seconds)
    rtt = np.full(n_slots, float(backbone_rtt))
    if rtt_jitter > 0:
        rtt = rtt + rng.uniform(0.0, rtt_jitter, size=n_slots)
    return WindowTraffic(n_slots, topo.n_stations, slot.astype(np.int64), pos,
                         station.astype(np.int64), fallback.astype(np.int64),
                         gain, gain_fb, arrivals, rtt)
