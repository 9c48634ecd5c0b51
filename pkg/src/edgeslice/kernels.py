"""Backend selection for the slot-recursion kernel.

The compiled extension is used when it imports; set ``EDGESLICE_PURE_PYTHON=1``
to force the Python twin.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("EDGESLICE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None = active)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def dispatch(a: int, q: float, xi: float, eta: float, edge_hz: float, d_cloud: float) -> int:
    return int(_impl.dispatch(int(a), float(q), float(xi), float(eta), float(edge_hz), float(d_cloud)))


def process_stream(arrivals, backlog, xi, eta, edge_hz, cloud_delay, service_bits):
    """Run T slots of dispatch + backlog recursion for one (slice, station).

    Returns (edge_sum, cloud_sum, dispatched, backlog_at_slot_start, final_backlog);
    edge_sum[t] and cloud_sum[t] are summed task delays of slot t.
    """
    arrivals = np.ascontiguousarray(arrivals, dtype=np.int64)
    cloud_delay = np.ascontiguousarray(cloud_delay, dtype=np.float64)
    return _impl.process_stream(arrivals, float(backlog), float(xi), float(eta),
                                float(edge_hz), cloud_delay, float(service_bits))
