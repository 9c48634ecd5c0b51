import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from edgeslice.config import DEFAULT_CONFIG, build_topology
from edgeslice.domain import OperationDecision, PlanningDecision, QueueState, SliceSpec
from edgeslice.operation import (ComputeParams, ContractError, NoComputeError, NoSpectrumError,
                                 RadioParams, allocate_spectrum, cloud_delay, dispatch_tasks,
                                 edge_delay, offloading_delay, processing_objective, run_window,
                                 slot_delay, solve_slot, subcarrier_rate, update_queue)
from edgeslice.traffic import SlotObservation, WindowTraffic, aggregate

TOPO = build_topology(DEFAULT_CONFIG["topology"])
RADIO = RadioParams()
COMPUTE = ComputeParams()
SLICES = (SliceSpec(0, 0.6e6, 1000.0, 0.1, 0.05, 2.0), SliceSpec(1, 2e6, 200.0, 0.2, 0.1, 2.0))
GOLDEN_RATE = 2450255.424284038  # g = 10^-12.81 with the default radio parameters


def test_rate_unit_snr():
    g = (RADIO.subcarrier_bandwidth * (RADIO.noise_w + RADIO.interference_w)) / RADIO.tx_power_w
    assert subcarrier_rate(g, RADIO) == pytest.approx(20e6, rel=1e-12)


def test_rate_limits_and_golden():
    assert subcarrier_rate(1e-30, RADIO) < 1e-3
    assert subcarrier_rate(10 ** -12.81, RADIO) == pytest.approx(GOLDEN_RATE, rel=1e-12)
    assert oracles.rate(10 ** -12.81) == pytest.approx(GOLDEN_RATE, rel=1e-12)


def test_allocate_examples():
    assert allocate_spectrum([3.0, 3.0]) == pytest.approx([0.5, 0.5])
    assert allocate_spectrum([4.0, 1.0]) == pytest.approx([1 / 3, 2 / 3], rel=1e-12)
    assert allocate_spectrum([7.0]).tolist() == [1.0]
    with pytest.raises(ValueError):
        allocate_spectrum([1.0, 0.0])


def test_allocate_4_1_grid_search():
    best = min(oracles.simplex_grid(2, 1000), key=lambda y: oracles.offload_sum(y, (4.0, 1.0), 1.0, 1))
    assert best == pytest.approx((1 / 3, 2 / 3), abs=1e-3)


@given(st.lists(st.floats(1e5, 1e8), min_size=1, max_size=6))
def test_allocation_sums_to_one(rates):
    y = allocate_spectrum(rates)
    assert abs(y.sum() - 1.0) <= 1e-12 and (y > 0).all()


def test_offloading_delay():
    assert offloading_delay(2e6, 1.0, 1, 20e6) == pytest.approx(0.1)
    assert offloading_delay(2e6, 0.5, 4, 20e6) == pytest.approx(offloading_delay(2e6, 0.5, 2, 20e6) / 2)
    assert offloading_delay(0.0, 0.5, 2, 20e6) == 0.0
    with pytest.raises(NoSpectrumError):
        offloading_delay(1.0, 1.0, 0, 20e6)


def test_edge_delay_examples():
    assert edge_delay(0.0, 1, 0, 2e6, 200.0, 1, 10e9) == pytest.approx(0.04)
    assert edge_delay(0.0, 3, 3, 2e6, 200.0, 1, 10e9) == pytest.approx(1e6 * 200 / 10e9)
    assert edge_delay(5e5, 4, 1, 2e6, 200.0, 2, 10e9) == pytest.approx(
        edge_delay(5e5, 4, 1, 2e6, 200.0, 1, 10e9) / 2)
    with pytest.raises(NoComputeError):
        edge_delay(0.0, 2, 1, 2e6, 200.0, 0, 10e9)


def test_cloud_delay_examples():
    assert cloud_delay(2e6, 200.0, 1, 100e9, 0.15) == pytest.approx(0.154)
    assert cloud_delay(2e6, 200.0, 10**12, 100e9, 0.15) == pytest.approx(0.15)
    assert cloud_delay(0.0, 200.0, 1, 100e9, 0.0) == 0.0


def test_dispatch_extremes():
    assert dispatch_tasks(7, 0.0, 0.6e6, 1000.0, 2, 10e9, 1, 100e9, 1e6) == 0
    assert dispatch_tasks(7, 0.0, 0.6e6, 1000.0, 1, 1.0, 4, 100e9, 0.0) == 7
    assert dispatch_tasks(7, 0.0, 0.6e6, 1000.0, 0, 10e9, 1, 100e9, 0.15) == 7


def test_dispatch_table_case():
    args = (5, 1e6, 0.6e6, 1000.0, 2, 10e9, 2, 100e9, 0.15)
    assert dispatch_tasks(*args) == oracles.dispatch_enum(*args)


params = st.tuples(st.integers(0, 20), st.floats(0, 5e6), st.sampled_from([0.6e6, 2e6, 1e5]),
                   st.sampled_from([200.0, 1000.0, 50.0]), st.integers(1, 10),
                   st.sampled_from([10e9, 1e9]), st.integers(1, 4), st.sampled_from([100e9, 10e9]),
                   st.floats(0.0, 0.5))


@given(params)
def test_dispatch_matches_enumeration(p):
    assert dispatch_tasks(*p) == oracles.dispatch_enum(*p)


@given(params)
def test_objective_convex(p):
    A = p[0]
    vals = [processing_objective(x, A, *p[1:]) for x in range(A + 1)]
    d = np.diff(vals)
    assert (np.diff(d) >= -1e-9 * max(1.0, np.abs(vals).max())).all()


def _obs(rng, n):
    pos = rng.uniform(0, 1000, size=(n, 2))
    station = TOPO.associate(pos) if n else np.zeros(0, dtype=int)
    fallback = TOPO.nearest_macro(pos) if n else np.zeros(0, dtype=int)
    gain = 10 ** (-rng.uniform(9, 13, n))
    gfb = np.where(station == fallback, gain, 10 ** (-rng.uniform(10, 13, n)))
    arr = rng.poisson(2.0, size=(2, n))
    return SlotObservation(0, pos, station, fallback, gain, gfb, arr, aggregate(arr, station, 3), 0.15)


def _plan(rng, zero_ok=True):
    o = rng.integers(0, 2, 2)
    full = TOPO.full_activation(o)
    b = np.zeros((2, 3), dtype=int)
    c = np.zeros((2, 3), dtype=int)
    for m in range(3):
        if full[m]:
            b[0, m] = rng.integers(0 if zero_ok else 1, 6)
            b[1, m] = rng.integers(1, 5)
            c[0, m] = rng.integers(0, 6)
            c[1, m] = rng.integers(1, 5)
    return PlanningDecision(o, b, c, rng.integers(1, 5, 2))


def test_empty_slot_zero_delay():
    rng = np.random.default_rng(0)
    obs = _obs(rng, 0)
    p = _plan(rng)
    q = QueueState.zeros(2, 3)
    dec = solve_slot(obs, p, q, SLICES, RADIO, COMPUTE, TOPO)
    rep = slot_delay(obs, p, dec, q, SLICES, RADIO, COMPUTE, TOPO)
    assert rep.delay.tolist() == [0.0, 0.0] and not rep.has_tasks.any()


def test_single_vehicle_single_task():
    g = 1e-11
    obs = SlotObservation(0, np.array([[260.0, 250.0]]), np.array([1]), np.array([0]),
                          np.array([g]), np.array([g / 10]), np.array([[1], [0]]),
                          np.array([[0, 1, 0], [0, 0, 0]]), 10.0)
    p = PlanningDecision((1, 0), [[1, 2, 0], [1, 1, 0]], [[1, 1, 0], [1, 1, 0]], (1, 1))
    q = QueueState.zeros(2, 3)
    dec = solve_slot(obs, p, q, SLICES, RADIO, COMPUTE, TOPO)
    assert dec.dispatch[0, 1] == 0
    rep = slot_delay(obs, p, dec, q, SLICES, RADIO, COMPUTE, TOPO)
    sl = SLICES[0]
    d_off = sl.task_size / (1.0 * 2 * subcarrier_rate(g, RADIO))
    d_edge = edge_delay(0.0, 1, 0, sl.task_size, sl.compute_intensity, 1, 10e9)
    assert rep.delay[0] == pytest.approx(d_off + d_edge, rel=1e-12)


def test_slot_delay_rejects_bad_dispatch():
    rng = np.random.default_rng(3)
    obs = _obs(rng, 5)
    p = _plan(rng)
    q = QueueState.zeros(2, 3)
    dec = solve_slot(obs, p, q, SLICES, RADIO, COMPUTE, TOPO)
    dec.dispatch[0, 0] = 10**6
    with pytest.raises(ContractError):
        slot_delay(obs, p, dec, q, SLICES, RADIO, COMPUTE, TOPO)


@pytest.mark.parametrize("seed", range(20))
def test_slot_delay_matches_straight_line(seed):
    rng = np.random.default_rng(seed)
    obs = _obs(rng, int(rng.integers(0, 7)))
    p = _plan(rng)
    q = QueueState(rng.uniform(0, 2e6, size=(2, 3)))
    dec = solve_slot(obs, p, q, SLICES, RADIO, COMPUTE, TOPO)
    rep = slot_delay(obs, p, dec, q, SLICES, RADIO, COMPUTE, TOPO)
    ref, disp = oracles.slot_delay_direct(obs, p, q.backlog, SLICES, TOPO)
    assert np.array_equal(dec.dispatch, disp)
    np.testing.assert_allclose(rep.delay, ref, rtol=1e-12)


def test_queue_examples():
    sl = SliceSpec(0, 1e6, 100.0, 0.1, 0.05, 1.0)
    p = PlanningDecision((0, 0), [[1, 0, 0]], [[1, 0, 0]], (1,))
    obs = SlotObservation(0, np.zeros((1, 2)), np.array([0]), np.array([0]), np.ones(1), np.ones(1),
                          np.array([[3]]), np.array([[3, 0, 0]]), 0.15)
    # A = x: nothing stays, service drains the zero queue
    out = update_queue(QueueState.zeros(1, 3), obs, OperationDecision(np.ones((1, 1)), np.array([[3, 0, 0]])),
                       p, [sl], ComputeParams(edge_vm_hz=1e9))
    assert out.backlog[0, 0] == 0.0
    # one task (1e6 bits) stays, service 1e7 bits: clamped
    out = update_queue(QueueState.zeros(1, 3), obs, OperationDecision(np.ones((1, 1)), np.array([[2, 0, 0]])),
                       p, [sl], ComputeParams(edge_vm_hz=1e9))
    assert out.backlog[0, 0] == 0.0
    # Q = 1e6, arrivals 5e5 bits, service 2e5 bits
    sl = SliceSpec(0, 5e5, 100.0, 0.1, 0.05, 1.0)
    obs = SlotObservation(0, np.zeros((1, 2)), np.array([0]), np.array([0]), np.ones(1), np.ones(1),
                          np.array([[1]]), np.array([[1, 0, 0]]), 0.15)
    q = QueueState(np.array([[1e6, 0, 0]]))
    out = update_queue(q, obs, OperationDecision(np.ones((1, 1)), np.array([[0, 0, 0]])), p, [sl],
                       ComputeParams(edge_vm_hz=2e7))
    assert out.backlog[0, 0] == pytest.approx(1.3e6, rel=1e-15)


def _traffic(rng, T, dens=1.0):
    obs = [_obs(rng, int(rng.poisson(dens * 8))) for _ in range(T)]
    for t, o in enumerate(obs):
        o.t = t
    return WindowTraffic.from_observations(obs, 3), obs


@pytest.mark.parametrize("seed", range(8))
def test_run_window_matches_unrolled_slots(seed):
    rng = np.random.default_rng(100 + seed)
    tr, obs = _traffic(rng, 3)
    p = _plan(rng, zero_ok=False)
    q = QueueState(rng.uniform(0, 1e6, size=(2, 3)) * TOPO.full_activation(p.activation))
    res = run_window(p, tr, q, SLICES, RADIO, COMPUTE, TOPO)
    delays = []
    for o in obs:
        dec = solve_slot(o, p, q, SLICES, RADIO, COMPUTE, TOPO)
        rep = slot_delay(o, p, dec, q, SLICES, RADIO, COMPUTE, TOPO)
        delays.append(rep.delay)
        q = update_queue(q, o, dec, p, SLICES, COMPUTE)
    np.testing.assert_allclose(res.delay, np.array(delays), rtol=1e-12)
    np.testing.assert_allclose(res.queues_out.backlog, q.backlog, rtol=1e-12)


def test_run_window_single_slot():
    rng = np.random.default_rng(5)
    tr, obs = _traffic(rng, 1)
    p = _plan(rng, zero_ok=False)
    q = QueueState.zeros(2, 3)
    res = run_window(p, tr, q, SLICES, RADIO, COMPUTE, TOPO)
    dec = solve_slot(obs[0], p, q, SLICES, RADIO, COMPUTE, TOPO)
    rep = slot_delay(obs[0], p, dec, q, SLICES, RADIO, COMPUTE, TOPO)
    np.testing.assert_allclose(res.delay[0], rep.delay, rtol=1e-12)
    np.testing.assert_allclose(res.mean_delay, np.where(rep.has_tasks, rep.delay, 0.0), rtol=1e-12)


def test_zero_traffic_window():
    rng = np.random.default_rng(6)
    tr, _ = _traffic(rng, 4, dens=0.0)
    p = _plan(rng)
    q = QueueState(np.zeros((2, 3)))
    res = run_window(p, tr, q, SLICES, RADIO, COMPUTE, TOPO)
    assert res.mean_delay.tolist() == [0.0, 0.0]
    assert np.array_equal(res.queues_out.backlog, q.backlog)


def test_missing_macro_spectrum_gives_infinite_delay():
    rng = np.random.default_rng(7)
    tr, _ = _traffic(rng, 3, dens=3.0)
    p = PlanningDecision((0, 0), np.zeros((2, 3)), np.zeros((2, 3)), (1, 1))
    res = run_window(p, tr, QueueState.zeros(2, 3), SLICES, RADIO, COMPUTE, TOPO)
    assert math.isinf(res.mean_delay[0])


@given(st.floats(0, 1e7), st.integers(0, 30), st.integers(0, 30), st.integers(0, 10),
       st.sampled_from([0.6e6, 2e6]), st.sampled_from([200.0, 1000.0]))
def test_queue_conservation(q0, A, x_raw, c, xi, eta):
    x = min(x_raw, A)
    sl = SliceSpec(0, xi, eta, 0.1, 0.05, 1.0)
    p = PlanningDecision((0, 0), [[1, 0, 0]], [[c, 0, 0]], (1,))
    obs = SlotObservation(0, np.zeros((1, 2)), np.array([0]), np.array([0]), np.ones(1), np.ones(1),
                          np.array([[A]]), np.array([[A, 0, 0]]), 0.15)
    out = update_queue(QueueState(np.array([[q0, 0, 0]])), obs,
                       OperationDecision(np.ones((1, 1)), np.array([[x, 0, 0]])), p, [sl], COMPUTE)
    q1 = out.backlog[0, 0]
    inflow = (A - x) * xi
    service = c * COMPUTE.edge_vm_hz * COMPUTE.slot_seconds / eta
    assert q1 >= 0
    assert q1 == max(0.0, q0 + inflow - service)
    if q0 + inflow - service > 0:
        assert q1 - q0 == pytest.approx(inflow - service, rel=1e-12, abs=1e-6)
