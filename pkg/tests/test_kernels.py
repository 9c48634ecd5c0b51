import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgeslice import kernels
from edgeslice.operation import dispatch_tasks

pytestmark = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")

PY = kernels.get_backend("python")


def _cy():
    return kernels.get_backend("cython")


@given(st.integers(0, 25), st.floats(0, 1e7), st.sampled_from([0.6e6, 2e6]),
       st.sampled_from([200.0, 1000.0]), st.integers(0, 10), st.integers(1, 4), st.floats(0, 0.5))
def test_dispatch_three_way(a, q, xi, eta, c, h, rtt):
    d_cloud = rtt + xi * eta / (h * 100e9)
    ref = dispatch_tasks(a, q, xi, eta, c, 10e9, h, 100e9, rtt)
    edge_hz = c * 10e9
    assert PY.dispatch(a, q, xi, eta, edge_hz, d_cloud) == ref
    assert _cy().dispatch(a, q, xi, eta, edge_hz, d_cloud) == ref


@given(st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_stream_parity(seed, c):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 80))
    arr = rng.poisson(rng.uniform(0, 12), T).astype(np.int64)
    d_cloud = 0.15 + rng.uniform(0, 0.05, T)
    args = (arr, float(rng.uniform(0, 3e6)), 0.6e6, 1000.0, c * 10e9, d_cloud, c * 10e9 / 1000.0)
    py = PY.process_stream(*args)
    cy = _cy().process_stream(*args)
    for a, b in zip(py[:4], cy[:4]):
        assert np.array_equal(np.asarray(a), np.asarray(b))
    assert py[4] == cy[4]


def test_backend_switch():
    assert kernels.get_backend(None) is _cy()
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
