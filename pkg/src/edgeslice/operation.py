"""Small-timescale engine: spectrum split, task dispatching, delays and backlogs.

Per slot and per (slice, station) the spectrum fractions and the number of
tasks sent to the cloud are chosen in closed form. ``run_window`` strings T
slots together using the compiled stream kernel; the per-slot functions below
are the readable reference path and are used for verbose simulation and tests.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .domain import OperationDecision, PlanningDecision, QueueState, SliceSpec, Topology
from .traffic import SlotObservation, WindowTraffic

log = logging.getLogger(__name__)


class NoSpectrumError(ValueError):
    """Vehicles need to offload but the slice holds no subcarriers there."""


class NoComputeError(ValueError):
    """Tasks are kept at the edge but the slice holds no VMs there."""


class ContractError(ValueError):
    """Operation decisions that are infeasible for the slot."""


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class RadioParams:
    subcarrier_bandwidth: float = 20e6  # Hz
    noise_density_dbm: float = -174.0  # dBm/Hz
    interference_density_dbm: float = -164.0  # dBm/Hz
    tx_power_dbm: float = 27.0
    noise_w: float = field(init=False, repr=False)
    interference_w: float = field(init=False, repr=False)
    tx_power_w: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.subcarrier_bandwidth <= 0:
            raise ValueError("subcarrier bandwidth must be positive")
        object.__setattr__(self, "noise_w", float(dbm_to_watts(self.noise_density_dbm)))
        object.__setattr__(self, "interference_w", float(dbm_to_watts(self.interference_density_dbm)))
        object.__setattr__(self, "tx_power_w", float(dbm_to_watts(self.tx_power_dbm)))


@dataclass(frozen=True)
class ComputeParams:
    edge_vm_hz: float = 10e9
    cloud_vm_hz: float = 100e9
    slot_seconds: float = 1.0


def subcarrier_rate(gain, radio: RadioParams):
    """Shannon rate of one subcarrier, bits/s."""
    g = np.asarray(gain, dtype=float)
    beta = radio.subcarrier_bandwidth
    snr = radio.tx_power_w * g / (beta * radio.noise_w + beta * radio.interference_w)
    r = beta * np.log2(1.0 + snr)
    return float(r) if r.ndim == 0 else r


def allocate_spectrum(rates) -> np.ndarray:
    """Fractions minimising sum_n 1/(y_n R_n) on the simplex: y_n ~ R_n^-1/2."""
    r = np.asarray(rates, dtype=float)
    if r.size == 0:
        raise ValueError("no vehicles to allocate spectrum to")
    if (r <= 0).any() or not np.isfinite(r).all():
        raise ValueError("rates must be positive and finite")
    w = 1.0 / np.sqrt(r)
    return w / w.sum()


def offloading_delay(task_bits: float, fraction: float, subcarriers: int, rate: float) -> float:
    if task_bits == 0:
        return 0.0
    if subcarriers <= 0:
        raise NoSpectrumError("no spectrum reserved")
    return task_bits / (fraction * subcarriers * rate)


def edge_delay(backlog: float, arrivals: int, dispatched: int, task_bits: float,
               intensity: float, vms: int, edge_vm_hz: float) -> float:
    local = arrivals - dispatched
    if vms <= 0:
        if local > 0:
            raise NoComputeError("no edge compute reserved")
        return math.inf
    return (backlog + (local + 1) * task_bits / 2.0) * intensity / (vms * edge_vm_hz)


def cloud_delay(task_bits: float, intensity: float, cloud_vms: int, cloud_vm_hz: float,
                rtt: float) -> float:
    return rtt + task_bits * intensity / (cloud_vms * cloud_vm_hz)


def processing_objective(x: int, arrivals: int, backlog: float, task_bits: float, intensity: float,
                         vms: int, edge_vm_hz: float, cloud_vms: int, cloud_vm_hz: float,
                         rtt: float) -> float:
    """Summed processing delay of a station's tasks when ``x`` go to the cloud."""
    local = arrivals - x
    d_e = edge_delay(backlog, arrivals, x, task_bits, intensity, vms, edge_vm_hz) if local > 0 else 0.0
    d_c = cloud_delay(task_bits, intensity, cloud_vms, cloud_vm_hz, rtt)
    return d_e * local + d_c * x


def dispatch_tasks(arrivals: int, backlog: float, task_bits: float, intensity: float, vms: int,
                   edge_vm_hz: float, cloud_vms: int, cloud_vm_hz: float, rtt: float) -> int:
    """Integer minimiser of the convex processing objective over {0..A}.

    The objective is quadratic in x with curvature nu1*xi; its stationary point
    is clamped to [0, A] and the better neighbouring integer kept (ties low).
    """
    A = int(arrivals)
    if A <= 0:
        return 0
    if vms <= 0:
        log.debug("no edge VMs reserved; dispatching all %d tasks", A)
        return A
    xi = task_bits
    nu1 = intensity / (vms * edge_vm_hz)
    nu2 = cloud_delay(task_bits, intensity, cloud_vms, cloud_vm_hz, rtt)
    nu3 = backlog + (A + 1) * xi / 2.0
    x_cont = (nu1 * nu3 + xi * nu1 * A / 2.0 - nu2) / (nu1 * xi)
    if x_cont <= 0.0:
        return 0
    if x_cont >= A:
        return A
    lo = int(math.floor(x_cont))
    if lo + 1 > A:
        return lo
    args = (A, backlog, task_bits, intensity, vms, edge_vm_hz, cloud_vms, cloud_vm_hz, rtt)
    return lo + 1 if processing_objective(lo + 1, *args) < processing_objective(lo, *args) else lo


def effective_station(station, fallback, spectrum_row) -> np.ndarray:
    """Serving station per vehicle for one slice: its own, or the macro when the
    own station reserves no subcarriers for the slice."""
    station = np.asarray(station)
    has = np.asarray(spectrum_row)[station] > 0
    return np.where(has, station, np.asarray(fallback))


def migrate_backlog(queues: QueueState, plan: PlanningDecision, topo: Topology) -> QueueState:
    """Hand backlogs of deactivated small stations to their fallback macro."""
    q = queues.backlog.copy()
    o = topo.full_activation(plan.activation)
    fb = topo.fallback_macro()
    for m in np.flatnonzero(o == 0):
        q[:, fb[m]] += q[:, m]
        q[:, m] = 0.0
    return QueueState(q)


@dataclass
class DelayReport:
    """Per-slice delays of one slot.

    ``offload`` is the mean per-vehicle offloading delay, ``edge`` and ``cloud``
    the per-task processing shares; ``delay`` = offload + edge + cloud.
    """

    t: int
    delay: np.ndarray
    offload: np.ndarray
    edge: np.ndarray
    cloud: np.ndarray
    has_tasks: np.ndarray


def _rates_for(obs: SlotObservation, eff: np.ndarray, radio: RadioParams) -> np.ndarray:
    gain = np.where(eff == obs.station, obs.gain, obs.gain_fallback)
    return np.asarray(subcarrier_rate(gain, radio), dtype=float)


def solve_slot(obs: SlotObservation, plan: PlanningDecision, queues: QueueState,
               slices: Sequence[SliceSpec], radio: RadioParams, compute: ComputeParams,
               topo: Topology) -> OperationDecision:
    K, M = plan.spectrum.shape
    n = obs.n_vehicles
    y = np.zeros((K, n))
    x = np.zeros((K, M), dtype=np.int64)
    o = topo.full_activation(plan.activation)
    for k, sl in enumerate(slices):
        eff = effective_station(obs.station, obs.fallback, plan.spectrum[k])
        rates = _rates_for(obs, eff, radio)
        A = np.bincount(eff, weights=obs.arrivals[k], minlength=M).astype(np.int64)
        for m in range(M):
            idx = np.flatnonzero(eff == m)
            if idx.size and plan.spectrum[k, m] > 0:
                y[k, idx] = allocate_spectrum(rates[idx])
            if o[m]:
                x[k, m] = dispatch_tasks(A[m], queues.backlog[k, m], sl.task_size,
                                         sl.compute_intensity, plan.compute[k, m],
                                         compute.edge_vm_hz, plan.cloud[k], compute.cloud_vm_hz,
                                         obs.backbone_rtt)
    return OperationDecision(y, x)


def slot_delay(obs: SlotObservation, plan: PlanningDecision, decisions: OperationDecision,
               queues: QueueState, slices: Sequence[SliceSpec], radio: RadioParams,
               compute: ComputeParams, topo: Topology) -> DelayReport:
    K, M = plan.spectrum.shape
    n = obs.n_vehicles
    offload = np.zeros(K)
    edge = np.zeros(K)
    cloud = np.zeros(K)
    has = np.zeros(K, dtype=bool)
    for k, sl in enumerate(slices):
        eff = effective_station(obs.station, obs.fallback, plan.spectrum[k])
        rates = _rates_for(obs, eff, radio)
        A = np.bincount(eff, weights=obs.arrivals[k], minlength=M).astype(np.int64)
        x = decisions.dispatch[k]
        if (x < 0).any() or (x > A).any():
            raise ContractError(f"slice {k}: dispatch outside [0, A]")
        total_off = 0.0
        for m in range(M):
            idx = np.flatnonzero(eff == m)
            if not idx.size:
                continue
            b = int(plan.spectrum[k, m])
            if b > 0:
                ysum = decisions.fractions[k, idx].sum()
                if not np.isclose(ysum, 1.0, rtol=0, atol=1e-9) or (decisions.fractions[k, idx] <= 0).any():
                    raise ContractError(f"slice {k}: spectrum fractions at {m} sum to {ysum}")
            for i in idx:
                try:
                    total_off += offloading_delay(sl.task_size, decisions.fractions[k, i], b, rates[i])
                except NoSpectrumError:
                    total_off = math.inf
        offload[k] = total_off / n if n else 0.0
        A_tot = int(A.sum())
        has[k] = A_tot > 0
        if A_tot:
            e_sum = 0.0
            c_sum = 0.0
            d_c = cloud_delay(sl.task_size, sl.compute_intensity, plan.cloud[k],
                              compute.cloud_vm_hz, obs.backbone_rtt)
            for m in range(M):
                local = int(A[m] - x[m])
                if local > 0:
                    e_sum += edge_delay(queues.backlog[k, m], int(A[m]), int(x[m]), sl.task_size,
                                        sl.compute_intensity, int(plan.compute[k, m]),
                                        compute.edge_vm_hz) * local
                c_sum += d_c * int(x[m])
            edge[k] = e_sum / A_tot
            cloud[k] = c_sum / A_tot
    return DelayReport(obs.t, offload + (edge + cloud), offload, edge, cloud, has)


def update_queue(queues: QueueState, obs: SlotObservation, decisions: OperationDecision,
                 plan: PlanningDecision, slices: Sequence[SliceSpec],
                 compute: ComputeParams) -> QueueState:
    K, M = plan.spectrum.shape
    q = queues.backlog.copy()
    for k, sl in enumerate(slices):
        eff = effective_station(obs.station, obs.fallback, plan.spectrum[k])
        A = np.bincount(eff, weights=obs.arrivals[k], minlength=M).astype(np.int64)
        for m in range(M):
            local = int(A[m] - decisions.dispatch[k, m])
            service = plan.compute[k, m] * compute.edge_vm_hz * compute.slot_seconds / sl.compute_intensity
            q[k, m] = max(0.0, q[k, m] + local * sl.task_size - service)
    return QueueState(q)


@dataclass
class WindowResult:
    """Outcome of one planning window under a fixed plan.

    Arrays are indexed (slot, slice) or (slot, slice, station).
    """

    mean_delay: np.ndarray  # per slice, over slots that carried tasks
    queues_out: QueueState
    delay: np.ndarray
    offload: np.ndarray
    edge: np.ndarray
    cloud: np.ndarray
    has_tasks: np.ndarray
    dispatched: np.ndarray
    arrivals: np.ndarray  # routed, (T, K, M)

    @property
    def reports(self) -> list[DelayReport]:
        return [
            DelayReport(t, self.delay[t], self.offload[t], self.edge[t], self.cloud[t], self.has_tasks[t])
            for t in range(self.delay.shape[0])
        ]


def window_mean(delay: np.ndarray, has_tasks: np.ndarray) -> np.ndarray:
    """Per-slice mean over slots with tasks; 0 for a slice that saw none."""
    K = delay.shape[1]
    out = np.zeros(K)
    for k in range(K):
        sel = delay[has_tasks[:, k], k]
        out[k] = sel.mean() if sel.size else 0.0
    return out


def run_window(plan: PlanningDecision, traffic: WindowTraffic, queues_in: QueueState,
               slices: Sequence[SliceSpec], radio: RadioParams, compute: ComputeParams,
               topo: Topology) -> WindowResult:
    T = traffic.n_slots
    if T < 1:
        raise ValueError("a window needs at least one slot")
    K, M = plan.spectrum.shape
    o = topo.full_activation(plan.activation)
    queues = migrate_backlog(queues_in, plan, topo)
    q_out = queues.backlog.copy()

    n_slot = np.bincount(traffic.slot, minlength=T).astype(float)
    rate_own = np.asarray(subcarrier_rate(traffic.gain, radio), dtype=float)
    rate_fb = np.asarray(subcarrier_rate(traffic.gain_fallback, radio), dtype=float)

    delay = np.zeros((T, K))
    offload = np.zeros((T, K))
    edge = np.zeros((T, K))
    cloud = np.zeros((T, K))
    has = np.zeros((T, K), dtype=bool)
    dispatched = np.zeros((T, K, M), dtype=np.int64)
    routed = np.zeros((T, K, M), dtype=np.int64)

    for k, sl in enumerate(slices):
        b = plan.spectrum[k]
        eff = effective_station(traffic.station, traffic.fallback, b)
        rate = np.where(eff == traffic.station, rate_own, rate_fb)
        flat = traffic.slot * M + eff
        s = np.bincount(flat, weights=1.0 / np.sqrt(rate), minlength=T * M).reshape(T, M) ** 2
        cnt = np.bincount(flat, minlength=T * M).reshape(T, M)
        A = np.rint(np.bincount(flat, weights=traffic.arrivals[k], minlength=T * M)).astype(np.int64).reshape(T, M)
        routed[:, k] = A

        # optimal fractions collapse the per-station offload sum to xi * S / b
        with np.errstate(divide="ignore", invalid="ignore"):
            per_bs = np.where(cnt > 0, sl.task_size * s / b[None, :], 0.0)
        per_bs = np.where((cnt > 0) & (b[None, :] == 0), np.inf, per_bs)
        off_sum = per_bs.sum(axis=1)
        offload[:, k] = np.divide(off_sum, n_slot, out=np.zeros(T), where=n_slot > 0)

        d_cloud = traffic.backbone_rtt + sl.task_size * sl.compute_intensity / (plan.cloud[k] * compute.cloud_vm_hz)
        e_tot = np.zeros(T)
        c_tot = np.zeros(T)
        for m in range(M):
            if not o[m]:
                continue
            edge_hz = plan.compute[k, m] * compute.edge_vm_hz
            service = edge_hz * compute.slot_seconds / sl.compute_intensity
            e, c, x, _, qf = kernels.process_stream(A[:, m], q_out[k, m], sl.task_size,
                                                    sl.compute_intensity, edge_hz, d_cloud, service)
            e_tot += e
            c_tot += c
            dispatched[:, k, m] = x
            q_out[k, m] = qf
        A_tot = A.sum(axis=1)
        has[:, k] = A_tot > 0
        edge[:, k] = np.divide(e_tot, A_tot, out=np.zeros(T), where=A_tot > 0)
        cloud[:, k] = np.divide(c_tot, A_tot, out=np.zeros(T), where=A_tot > 0)
        delay[:, k] = offload[:, k] + (edge[:, k] + cloud[:, k])

    return WindowResult(window_mean(delay, has), QueueState(q_out), delay, offload, edge, cloud,
                        has, dispatched, routed)
