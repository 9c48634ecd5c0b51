"""Compiled vs pure-Python kernels: raw slot recursion and one myopic planning call.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from edgeslice import kernels
from edgeslice.baseline import SearchGrid, myopic_plan
from edgeslice.config import default_config
from edgeslice.env import SlicingEnv


def stream_case(T=600, seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.poisson(8.0, T).astype(np.int64)
    return (arr, 1e6, 0.6e6, 1000.0, 4 * 10e9, np.full(T, 0.156), 4 * 10e9 / 1000.0)


def bench(label, fn, repeat):
    t = min(timeit.repeat(fn, number=1, repeat=repeat))
    print(f"  {label:<28s} {t * 1e3:10.3f} ms")
    return t


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    case = stream_case()
    sc = default_config().scenario
    env = SlicingEnv(sc)
    env.reset(0)
    traffic = env.sample_traffic(env.density, np.random.default_rng(1))

    results = {}
    active = kernels._impl
    try:
        for name in backends:
            mod = kernels.get_backend(name)
            kernels._impl = mod
            print(f"{name}:")
            results[name] = (
                bench("process_stream (T=600)", lambda: mod.process_stream(*case), args.repeat),
                bench("myopic_plan (default grid)",
                      lambda: myopic_plan(sc, traffic, env.queues, SearchGrid()), max(1, args.repeat // 2)),
            )
    finally:
        kernels._impl = active
    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        print(f"speed-up: stream x{py[0] / cy[0]:.1f}, planner x{py[1] / cy[1]:.1f}")


if __name__ == "__main__":
    main()
