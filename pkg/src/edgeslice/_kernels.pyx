# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-(slice, station) slot recursion: dispatch, delay and backlog."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _psi(long long a, long long x, double q, double xi, double eta,
                        double edge_hz, double d_cloud) nogil:
    cdef long long local = a - x
    cdef double edge = 0.0
    if local > 0:
        edge = (q + (local + 1) * xi / 2.0) * eta / edge_hz * local
    return edge + d_cloud * x


cdef inline long long _dispatch(long long a, double q, double xi, double eta,
                                double edge_hz, double d_cloud) nogil:
    cdef double nu1, nu3, xc, plo, phi
    cdef long long lo, hi
    if a <= 0:
        return 0
    if edge_hz <= 0.0:
        return a
    nu1 = eta / edge_hz
    nu3 = q + (a + 1) * xi / 2.0
    xc = (nu1 * nu3 + xi * nu1 * a / 2.0 - d_cloud) / (nu1 * xi)
    if xc <= 0.0:
        return 0
    if xc >= a:
        return a
    lo = <long long>floor(xc)
    hi = lo + 1
    if hi > a:
        return lo
    plo = _psi(a, lo, q, xi, eta, edge_hz, d_cloud)
    phi = _psi(a, hi, q, xi, eta, edge_hz, d_cloud)
    return hi if phi < plo else lo


def dispatch(long long a, double q, double xi, double eta, double edge_hz, double d_cloud):
    return _dispatch(a, q, xi, eta, edge_hz, d_cloud)


def process_stream(const long long[::1] arrivals, double backlog, double xi, double eta,
                   double edge_hz, const double[::1] cloud_delay, double service_bits):
    cdef Py_ssize_t T = arrivals.shape[0], t
    cdef long long a, x, local
    cdef double q = backlog, d_e
    edge_np = np.zeros(T, dtype=np.float64)
    cloud_np = np.zeros(T, dtype=np.float64)
    x_np = np.zeros(T, dtype=np.int64)
    q_np = np.zeros(T, dtype=np.float64)
    cdef double[::1] edge_sum = edge_np
    cdef double[::1] cloud_sum = cloud_np
    cdef long long[::1] xs = x_np
    cdef double[::1] qs = q_np
    with nogil:
        for t in range(T):
            qs[t] = q
            a = arrivals[t]
            x = _dispatch(a, q, xi, eta, edge_hz, cloud_delay[t])
            local = a - x
            if local > 0:
                d_e = (q + (local + 1) * xi / 2.0) * eta / edge_hz
                edge_sum[t] = d_e * local
            cloud_sum[t] = cloud_delay[t] * x
            xs[t] = x
            q = q + local * xi - service_bits
            if q < 0.0:
                q = 0.0
    return edge_np, cloud_np, x_np, q_np, q
