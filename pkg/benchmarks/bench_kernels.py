"""Compare the compiled and numpy kernel backends on realistic shapes.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall time per kernel and the speedup. Outputs are checked
for equality first, so a speedup is only reported for identical results.
"""

import argparse
import time

import numpy as np

from hmod import _pykernels
from hmod.trips import SyntheticSpec, generate_synthetic

try:
    from hmod import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases():
    log = generate_synthetic(SyntheticSpec(nodes=12, duration_s=2 * 86400, base_rate=2.0,
                                           profiles=[("am", 8, 1.5, 4.0)], seed=0))
    fwd, rev = log.adjacency("forward"), log.adjacency("reverse")
    rng = np.random.default_rng(0)
    n = log.node_count
    anchors = np.arange(n)
    u = rng.random((n, 4, 4))
    demand = rng.poisson(3.0, size=(n, n)).astype(float)
    t = float(log.times[len(log) // 2])
    yield "od_counts", (log.origins, log.dests, n)
    yield "demand_walks", (demand, anchors, u, 0.01)
    yield "decay_walks", (fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2], anchors, t, 28800.0, 1800.0, u)


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled kernels unavailable; build with pip install -e .")
        return
    print(f"{'kernel':<14}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, call in cases():
        tp, out_p = best_of(lambda: getattr(_pykernels, name)(*call), args.repeat)
        tc, out_c = best_of(lambda: getattr(_ckernels, name)(*call), args.repeat)
        if not same(out_p, out_c):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<14}{tp * 1e3:>14.3f}{tc * 1e3:>14.3f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
