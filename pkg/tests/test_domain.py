import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from edgeslice.config import DEFAULT_CONFIG, build_topology
from edgeslice.domain import (BaseStation, BsKind, PlanningDecision, PlanShapeError, Topology,
                              plan_to_raw, project_plan, validate_plan)

TOPO = build_topology(DEFAULT_CONFIG["topology"])
K, M = 2, 3


def plan(o=(1, 1), b=None, c=None, h=(1, 1)):
    b = np.zeros((K, M)) if b is None else b
    c = np.zeros((K, M)) if c is None else c
    return PlanningDecision(o, b, c, h)


def test_default_topology():
    assert TOPO.n_stations == 3 and TOPO.n_small == 2 and TOPO.n_regions == 16
    assert TOPO.macro_ids == [0] and TOPO.small_ids == [1, 2]
    assert TOPO.full_activation([0, 1]).tolist() == [1, 0, 1]


def test_topology_needs_macro_coverage():
    with pytest.raises(ValueError):
        Topology((BaseStation(0, BsKind.MACRO, (0.0, 0.0), 100.0, 10, 10),), 1000.0, (2, 2))


def test_association_nearest_then_lowest_id():
    # at the small station's centre
    assert TOPO.associate(np.array([[250.0, 250.0]])).tolist() == [1]
    # equidistant between the two small stations' centres is outside both: macro
    assert TOPO.associate(np.array([[500.0, 500.0]])).tolist() == [0]
    stations = (BaseStation(0, BsKind.MACRO, (500.0, 500.0), 800.0, 10, 10),
                BaseStation(1, BsKind.SMALL, (400.0, 500.0), 300.0, 10, 10),
                BaseStation(2, BsKind.SMALL, (600.0, 500.0), 300.0, 10, 10))
    topo = Topology(stations, 1000.0, (4, 4))
    # ties between 0/1/2 at the macro site resolve to the lowest id
    assert topo.associate(np.array([[500.0, 500.0]])).tolist() == [0]
    assert topo.associate(np.array([[500.0, 600.0]])).tolist() == [0]


def test_validate_zero_plan_is_valid():
    assert validate_plan(plan(o=(0, 0)), TOPO) == []


def test_validate_spectrum_capacity():
    b = np.zeros((K, M))
    b[:, 1] = 6
    assert "spectrum capacity at 1" in validate_plan(plan(b=b), TOPO)


def test_validate_inactive_resource():
    c = np.zeros((K, M))
    c[0, 2] = 1
    assert "resource on inactive BS 2" in validate_plan(plan(o=(1, 0), c=c), TOPO)


def test_validate_cloud_floor():
    assert "cloud VMs below 1" in validate_plan(plan(h=(0, 1)), TOPO)


def test_validate_shape_error_is_structural():
    bad = PlanningDecision((1, 1), np.zeros((K, 4)), np.zeros((K, 4)), (1, 1))
    with pytest.raises(PlanShapeError):
        validate_plan(bad, TOPO)


def test_project_feasible_is_identity():
    b = np.array([[3, 4, 0], [5, 6, 2]])
    c = np.array([[2, 0, 9], [8, 1, 1]])
    p = plan(o=(1, 1), b=b, c=c, h=(2, 4))
    assert project_plan(plan_to_raw(p), TOPO, K, 4) == p


def test_project_threshold():
    raw = plan_to_raw(plan(o=(1, 1), b=np.full((K, M), 3), c=np.full((K, M), 3)))
    raw[0] = 0.49
    p = project_plan(raw, TOPO, K, 4)
    assert p.activation.tolist() == [0, 1]
    assert not p.spectrum[:, 1].any() and not p.compute[:, 1].any()


def test_project_overflow_is_l1_closest():
    b = np.zeros((K, M))
    b[:, 0] = 8
    raw = plan_to_raw(plan(b=b))
    p = project_plan(raw, TOPO, K, 4)
    assert p.spectrum[:, 0].tolist() == [5, 5]
    # among integer pairs with sum <= 10, (5, 5) is L1-closest to the scaled target (5, 5)
    target = np.array([8.0, 8.0]) * 10 / 16
    best = min((abs(a - target[0]) + abs(bb - target[1]), (a, bb))
               for a, bb in itertools.product(range(11), repeat=2) if a + bb <= 10)
    assert best[1] == (5, 5)


def test_plan_roundtrip_and_key():
    p = plan(b=np.array([[1, 2, 3], [0, 0, 1]]), h=(3, 1))
    assert PlanningDecision.from_dict(p.to_dict()) == p
    assert hash(PlanningDecision.from_dict(p.to_dict())) == hash(p)
    assert p.key()[:2] == (1, 1) and p.key()[-2:] == (3, 1)
    with pytest.raises(ValueError):
        p.spectrum[0, 0] = 5


raw_vectors = hnp.arrays(np.float64, 2 + 2 * K * M + K,
                         elements=st.floats(-5.0, 15.0, allow_nan=False))


@given(raw_vectors)
def test_projection_sound(raw):
    p = project_plan(raw, TOPO, K, 4)
    assert validate_plan(p, TOPO) == []


@given(raw_vectors)
def test_projection_deterministic(raw):
    assert project_plan(raw, TOPO, K, 4) == project_plan(raw.copy(), TOPO, K, 4)


@given(raw_vectors)
def test_projection_idempotent(raw):
    p = project_plan(raw, TOPO, K, 4)
    assert project_plan(plan_to_raw(p), TOPO, K, 4) == p
