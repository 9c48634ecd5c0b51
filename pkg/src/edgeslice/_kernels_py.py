"""Pure-Python twin of ``_kernels.pyx``; same arithmetic, same order."""
import math

import numpy as np


def _psi(a, x, q, xi, eta, edge_hz, d_cloud):
    local = a - x
    edge = 0.0
    if local > 0:
        edge = (q + (local + 1) * xi / 2.0) * eta / edge_hz * local
    return edge + d_cloud * x


def dispatch(a, q, xi, eta, edge_hz, d_cloud):
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
    lo = int(math.floor(xc))
    hi = lo + 1
    if hi > a:
        return lo
    plo = _psi(a, lo, q, xi, eta, edge_hz, d_cloud)
    phi = _psi(a, hi, q, xi, eta, edge_hz, d_cloud)
    return hi if phi < plo else lo


def process_stream(arrivals, backlog, xi, eta, edge_hz, cloud_delay, service_bits):
    T = len(arrivals)
    edge_sum = np.zeros(T)
    cloud_sum = np.zeros(T)
    xs = np.zeros(T, dtype=np.int64)
    qs = np.zeros(T)
    q = float(backlog)
    arr = arrivals.tolist()
    dc = cloud_delay.tolist()
    for t in range(T):
        qs[t] = q
        a = arr[t]
        x = dispatch(a, q, xi, eta, edge_hz, dc[t])
        local = a - x
        if local > 0:
            d_e = (q + (local + 1) * xi / 2.0) * eta / edge_hz
            edge_sum[t] = d_e * local
        cloud_sum[t] = dc[t] * x
        xs[t] = x
        q = q + local * xi - service_bits
        if q < 0.0:
            q = 0.0
    return edge_sum, cloud_sum, xs, qs, q
