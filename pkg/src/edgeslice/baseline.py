"""Myopic one-window planner: exact minimisation of the window cost over a grid.

The adjustment cost is ignored when choosing. For fixed small-station
activation, a slice's mean delay is a sum of per-station terms once it is known
which small stations reserve spectrum for it (their vehicles otherwise fall back
to the macro). So each slice gets a cost table over its own
(cloud VMs, spectrum per station, VMs per station) grid, and the slices are then
combined under the per-station capacity limits. For two slices this uses a
cumulative-minimum table over residual capacity; more slices fall back to plain
enumeration of the product grid.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .config import Scenario
from .cost import sla_revenue_array
from .domain import PlanningDecision, QueueState, validate_plan
from .operation import subcarrier_rate
from .traffic import WindowTraffic


class EmptyGridError(ValueError):
    pass


@dataclass(frozen=True)
class SearchGrid:
    spectrum_step: int = 2
    compute_step: int = 2
    cloud_values: tuple[int, ...] = (1, 2, 4)
    activation_values: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if self.spectrum_step < 1 or self.compute_step < 1:
            raise ValueError("grid steps must be >= 1")
        if not self.cloud_values or min(self.cloud_values) < 1:
            raise EmptyGridError("cloud values must be non-empty and >= 1")
        if not self.activation_values or not set(self.activation_values) <= {0, 1}:
            raise EmptyGridError("activation values must be a non-empty subset of {0, 1}")
        object.__setattr__(self, "cloud_values", tuple(sorted(set(int(h) for h in self.cloud_values))))
        object.__setattr__(self, "activation_values", tuple(sorted(set(self.activation_values))))

    def spectrum_values(self, cap: int) -> np.ndarray:
        return np.arange(0, cap + 1, self.spectrum_step)

    def compute_values(self, cap: int) -> np.ndarray:
        return np.arange(0, cap + 1, self.compute_step)


@dataclass
class MyopicResult:
    plan: PlanningDecision
    objective: float  # window cost without adjustment, on the planning sample
    n_ties: int


def _tol(v: float) -> float:
    return 1e-9 * max(1.0, abs(v))


class _SliceTables:
    """Per-slice delay/cost tables for one activation vector."""

    def __init__(self, scenario: Scenario, traffic: WindowTraffic, grid: SearchGrid):
        self.sc = scenario
        self.traffic = traffic
        self.grid = grid
        topo = scenario.topology
        self.M = topo.n_stations
        self.T = traffic.n_slots
        self.b_vals = [grid.spectrum_values(c) for c in topo.subcarrier_caps]
        self.c_vals = [grid.compute_values(c) for c in topo.vm_caps]
        self.h_vals = np.array(grid.cloud_values)
        self.n_slot = np.bincount(traffic.slot, minlength=self.T).astype(float)
        radio = scenario.radio
        self.inv_own = 1.0 / np.sqrt(np.asarray(subcarrier_rate(traffic.gain, radio), dtype=float))
        self.inv_fb = 1.0 / np.sqrt(np.asarray(subcarrier_rate(traffic.gain_fallback, radio), dtype=float))
        self._streams: dict = {}

    def _route(self, served_small: frozenset) -> np.ndarray:
        tr = self.traffic
        small = ~self.sc.topology.macro_mask[tr.station]
        stays = ~small | np.isin(tr.station, list(served_small))
        return np.where(stays, tr.station, tr.fallback)

    def _stream(self, k, m, arrivals, q0, ci, hi, key):
        full = (k, m, key, q0, ci, hi)
        hit = self._streams.get(full)
        if hit is not None:
            return hit
        sl = self.sc.slices[k]
        comp = self.sc.compute
        edge_hz = self.c_vals[m][ci] * comp.edge_vm_hz
        service = edge_hz * comp.slot_seconds / sl.compute_intensity
        d_cloud = self.traffic.backbone_rtt + sl.task_size * sl.compute_intensity / (
            self.h_vals[hi] * comp.cloud_vm_hz)
        e, c, _, _, _ = kernels.process_stream(arrivals, q0, sl.task_size, sl.compute_intensity,
                                               edge_hz, d_cloud, service)
        psi = e + c
        self._streams[full] = psi
        return psi

    def slice_cost(self, k: int, o: np.ndarray, q0: np.ndarray) -> np.ndarray:
        """Cost table indexed [h, b_0..b_{M-1}, c_0..c_{M-1}]; +inf where infeasible."""
        sc, tr, M, T = self.sc, self.traffic, self.M, self.T
        topo = sc.topology
        sl = sc.slices[k]
        small_active = [m for m in topo.small_ids if o[m]]
        shape = (len(self.h_vals),) + tuple(len(v) for v in self.b_vals) + tuple(len(v) for v in self.c_vals)
        dbar = np.full(shape, np.nan)  # NaN = not a feasible grid point

        arr_k = tr.arrivals[k]
        A_tot = np.bincount(tr.slot, weights=arr_k, minlength=T)
        inc = A_tot > 0
        n_inc = int(inc.sum())

        for r in range(len(small_active) + 1):
            for served in itertools.combinations(small_active, r):
                served = frozenset(served)
                eff = self._route(served)
                w = np.where(eff == tr.station, self.inv_own, self.inv_fb)
                flat = tr.slot * M + eff
                S = np.bincount(flat, weights=w, minlength=T * M).reshape(T, M) ** 2
                cnt = np.bincount(flat, minlength=T * M).reshape(T, M)
                A = np.rint(np.bincount(flat, weights=arr_k, minlength=T * M)).astype(np.int64).reshape(T, M)

                b_idx, c_idx, terms = [], [], []
                for m in range(M):
                    vals = self.b_vals[m]
                    if topo.macro_mask[m]:
                        bi = np.arange(len(vals))
                    elif m in served:
                        bi = np.flatnonzero(vals > 0)
                    else:
                        bi = np.array([0])
                    b_idx.append(bi)
                    c_idx.append(np.arange(len(self.c_vals[m])) if o[m] else np.array([0]))

                    # offload share of station m for each spectrum choice
                    off = np.zeros(len(bi))
                    if n_inc:
                        ratio = np.zeros(T)
                        np.divide(S[:, m], self.n_slot, out=ratio, where=self.n_slot > 0)
                        busy = bool((cnt[inc, m] > 0).any())
                        base = sl.task_size * ratio[inc]
                        for j, i in enumerate(bi):
                            v = vals[i]
                            if v == 0:
                                off[j] = np.inf if busy else 0.0
                            else:
                                off[j] = np.mean(base / v)
                    terms.append(("b", m, off))

                    # processing share for each (h, VMs) choice
                    proc = np.zeros((len(self.h_vals), len(c_idx[m])))
                    if o[m] and A[:, m].any() and n_inc:
                        key = served if topo.macro_mask[m] else None
                        for hi in range(len(self.h_vals)):
                            for j, ci in enumerate(c_idx[m]):
                                psi = self._stream(k, m, A[:, m], float(q0[m]), int(ci), hi, key)
                                proc[hi, j] = np.mean(psi[inc] / A_tot[inc])
                    terms.append(("c", m, proc))

                block = np.zeros(tuple([len(self.h_vals)] + [len(i) for i in b_idx] + [len(i) for i in c_idx]))
                ndim = block.ndim
                for kind, m, arr in terms:
                    if kind == "b":
                        sh = [1] * ndim
                        sh[1 + m] = len(arr)
                        block = block + arr.reshape(sh)
                    else:
                        sh = [1] * ndim
                        sh[0] = arr.shape[0]
                        sh[1 + M + m] = arr.shape[1]
                        block = block + arr.reshape(sh)
                dbar[np.ix_(np.arange(len(self.h_vals)), *b_idx, *c_idx)] = block

        units = self._units(shape)
        revenue = sla_revenue_array(dbar, sl, sc.cost)
        return np.where(np.isnan(dbar), np.inf, sc.cost.q_r * units - revenue)

    def _units(self, shape) -> np.ndarray:
        M = self.M
        ndim = len(shape)
        units = self.h_vals.reshape([-1] + [1] * (ndim - 1)).astype(float)
        for m in range(M):
            sh = [1] * ndim
            sh[1 + m] = len(self.b_vals[m])
            units = units + self.b_vals[m].reshape(sh)
            sh = [1] * ndim
            sh[1 + M + m] = len(self.c_vals[m])
            units = units + self.c_vals[m].reshape(sh)
        return units


def _cummin_all(a: np.ndarray) -> np.ndarray:
    out = a
    for axis in range(a.ndim):
        out = np.minimum.accumulate(out, axis=axis)
    return out


def myopic_plan(scenario: Scenario, traffic: WindowTraffic, queues: QueueState,
                grid: SearchGrid) -> MyopicResult:
    """Grid plan minimising deployment + provisioning - SLA revenue for one window.

    Ties (within 1e-9 relative) go to the lexicographically smallest plan
    (activation, spectrum row-major, compute row-major, cloud).
    """
    topo = scenario.topology
    K, M = scenario.n_slices, topo.n_stations
    small = topo.small_ids
    tables = _SliceTables(scenario, traffic, grid)
    qd = scenario.cost.q_d
    fb = topo.fallback_macro()
    b_max = [len(v) - 1 for v in tables.b_vals]
    c_max = [len(v) - 1 for v in tables.c_vals]

    per_o = []
    for o_small in itertools.product(grid.activation_values, repeat=len(small)):
        o = topo.full_activation(o_small)
        q = queues.backlog.copy()
        for m in np.flatnonzero(o == 0):
            q[:, fb[m]] += q[:, m]
            q[:, m] = 0.0
        costs = [tables.slice_cost(k, o, q[k]) for k in range(K)]
        best_h = [np.argmin(c, axis=0) for c in costs]
        reduced = [np.min(c, axis=0) for c in costs]
        fixed = qd * float(np.sum(o_small))
        if K == 1:
            total = reduced[0]
        elif K == 2:
            V2 = _cummin_all(reduced[1])
            total = reduced[0] + V2[(slice(None, None, -1),) * (2 * M)]
        else:
            total = None
        per_o.append((np.array(o_small), fixed, reduced, best_h, total))

    if K <= 2:
        vstar = min(fixed + float(np.min(total)) for _, fixed, _, _, total in per_o)
    else:
        vstar = min(_joint_min(reduced, b_max, c_max) + fixed for _, fixed, reduced, _, _ in per_o)
    if not np.isfinite(vstar):
        raise EmptyGridError("no feasible plan on the grid")
    thr = vstar + _tol(vstar)

    caps = np.array(b_max + c_max)
    cands = []
    for o_small, fixed, reduced, best_h, total in per_o:
        if K <= 2:
            if fixed + float(np.min(total)) > thr:
                continue
            for a1 in zip(*np.nonzero(fixed + total <= thr)):
                a1 = tuple(int(i) for i in a1)
                if K == 1:
                    cands.append((o_small, best_h, [a1]))
                    continue
                rem = thr - fixed - reduced[0][a1]
                box = tuple(slice(0, int(r) + 1) for r in caps - np.array(a1))
                sub = reduced[1][box]
                for a2 in zip(*np.nonzero(sub <= rem)):
                    cands.append((o_small, best_h, [a1, tuple(int(i) for i in a2)]))
        else:
            for combo in _joint_enumerate(reduced, b_max, c_max, thr - fixed):
                cands.append((o_small, best_h, combo))

    plans = []
    for o_small, best_h, combo in cands:
        B = np.zeros((K, M), dtype=np.int64)
        C = np.zeros((K, M), dtype=np.int64)
        h = np.zeros(K, dtype=np.int64)
        for k, a in enumerate(combo):
            for m in range(M):
                B[k, m] = tables.b_vals[m][a[m]]
                C[k, m] = tables.c_vals[m][a[M + m]]
            h[k] = tables.h_vals[best_h[k][a]]
        plans.append(PlanningDecision(o_small, B, C, h))
    plan = min(plans, key=PlanningDecision.key)
    assert not validate_plan(plan, topo, K)
    return MyopicResult(plan, vstar, len(plans))


def _joint_min(reduced: Sequence[np.ndarray], b_max, c_max) -> float:
    best = np.inf
    for combo in _joint_enumerate(reduced, b_max, c_max, np.inf):
        best = min(best, sum(r[a] for r, a in zip(reduced, combo)))
    return best


def _joint_enumerate(reduced, b_max, c_max, limit):
    """All capacity-feasible slice combinations with summed cost <= limit (brute force)."""
    caps = np.array(b_max + c_max)
    finite = [[tuple(int(i) for i in a) for a in zip(*np.nonzero(np.isfinite(r)))] for r in reduced]
    for combo in itertools.product(*finite):
        use = np.sum(combo, axis=0)
        if (use > caps).any():
            continue
        if sum(r[a] for r, a in zip(reduced, combo)) <= limit:
            yield list(combo)
