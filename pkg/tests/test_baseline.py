import itertools

import numpy as np
import pytest

from edgeslice.baseline import EmptyGridError, SearchGrid, myopic_plan
from edgeslice.config import default_config
from edgeslice.domain import PlanningDecision, QueueState, validate_plan
from edgeslice.env import SlicingEnv


def tiny(n_slices):
    slices = [{"id": 0, "task_size": 0.6e6, "compute_intensity": 1000.0, "deadline": 0.1,
               "soft_deadline": 0.05, "arrival_rate": 2.0},
              {"id": 1, "task_size": 2e6, "compute_intensity": 200.0, "deadline": 0.2,
               "soft_deadline": 0.1, "arrival_rate": 1.0}][:n_slices]
    return default_config(
        topology={"area_side": 1000.0, "grid": [2, 2], "stations": [
            {"id": 0, "kind": "macro", "position": [500.0, 500.0], "coverage_radius": 710.0,
             "subcarriers": 2, "vms": 2},
            {"id": 1, "kind": "small", "position": [250.0, 250.0], "coverage_radius": 300.0,
             "subcarriers": 2, "vms": 2}]},
        slices=slices,
        compute={"cloud_vm_max": 2},
        traffic={"pattern": {"base": 1.5, "amplitude": 0.0, "phase": 0.0, "noise": 0.0}},
        timescales={"slots_per_window": 6, "windows": 2},
    ).scenario


def all_plans(sc, h_values):
    K, M = sc.n_slices, sc.topology.n_stations
    for o in (0, 1):
        per_slice = list(itertools.product(range(3), repeat=2 * M))
        for rows in itertools.product(per_slice, repeat=K):
            for h in itertools.product(h_values, repeat=K):
                p = PlanningDecision([o], [r[:M] for r in rows], [r[M:] for r in rows], h)
                if not validate_plan(p, sc.topology):
                    yield p


def brute_force(sc, traffic, queues, h_values):
    env = SlicingEnv(sc)
    scored = [(env.evaluate_plan(p, traffic, queues, include_adjustment=False)[0].total, p)
              for p in all_plans(sc, h_values)]
    best = min(v for v, _ in scored)
    tol = 1e-9 * max(1.0, abs(best))
    return best, min((p for v, p in scored if v <= best + tol), key=PlanningDecision.key)


@pytest.mark.parametrize("n_slices,seed", [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1)])
def test_matches_full_enumeration(n_slices, seed):
    sc = tiny(n_slices)
    env = SlicingEnv(sc)
    env.reset(seed)
    traffic = env.sample_traffic(env.density, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 10)
    queues = QueueState(rng.uniform(0, 2e6, size=(n_slices, 2)))
    grid = SearchGrid(1, 1, (1, 2))
    res = myopic_plan(sc, traffic, queues, grid)
    best, plan = brute_force(sc, traffic, queues, (1, 2))
    assert res.plan == plan
    assert res.objective == pytest.approx(best, rel=1e-12, abs=1e-12)


def test_zero_traffic_minimal_plan():
    cfg = default_config(traffic={"pattern": {"base": 0.0, "amplitude": 0.0, "noise": 0.0}})
    sc = cfg.scenario
    env = SlicingEnv(sc)
    env.reset(0)
    tr = env.sample_traffic(env.density, np.random.default_rng(0))
    res = myopic_plan(sc, tr, env.queues, SearchGrid())
    assert res.plan == PlanningDecision.minimal(sc.topology, 2)


def test_single_plan_grid(scenario):
    env = SlicingEnv(scenario)
    env.reset(0)
    tr = env.sample_traffic(env.density, np.random.default_rng(0))
    grid = SearchGrid(100, 100, (3,), (0,))
    res = myopic_plan(scenario, tr, env.queues, grid)
    assert res.plan == PlanningDecision((0, 0), np.zeros((2, 3)), np.zeros((2, 3)), (3, 3))


def test_empty_grid_rejected():
    with pytest.raises(EmptyGridError):
        SearchGrid(activation_values=())
    with pytest.raises(EmptyGridError):
        SearchGrid(cloud_values=())


def random_grid_plan(rng, sc, grid):
    topo = sc.topology
    while True:
        o = rng.choice(grid.activation_values, size=topo.n_small)
        full = topo.full_activation(o)
        b = np.zeros((2, 3), dtype=int)
        c = np.zeros((2, 3), dtype=int)
        for m in range(3):
            if full[m]:
                bv = grid.spectrum_values(topo.subcarrier_caps[m])
                cv = grid.compute_values(topo.vm_caps[m])
                b[:, m] = rng.choice(bv, 2)
                c[:, m] = rng.choice(cv, 2)
        p = PlanningDecision(o, b, c, rng.choice(grid.cloud_values, 2))
        if not validate_plan(p, topo):
            return p


@pytest.mark.parametrize("seed", [3, 4])
def test_no_grid_plan_beats_result(scenario, seed):
    env = SlicingEnv(scenario)
    env.reset(seed)
    tr = env.sample_traffic(env.density, np.random.default_rng(seed))
    grid = SearchGrid()
    res = myopic_plan(scenario, tr, env.queues, grid)
    assert validate_plan(res.plan, scenario.topology) == []
    value = env.evaluate_plan(res.plan, tr, include_adjustment=False)[0].total
    assert value == pytest.approx(res.objective, rel=1e-12)
    rng = np.random.default_rng(seed)
    tol = 1e-9 * max(1.0, abs(value))
    for _ in range(300):
        p = random_grid_plan(rng, scenario, grid)
        assert env.evaluate_plan(p, tr, include_adjustment=False)[0].total >= value - tol
