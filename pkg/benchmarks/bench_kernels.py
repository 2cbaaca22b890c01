"""Compare the compiled and numpy episode-simulation kernels.

    python3 benchmarks/bench_kernels.py [--episodes 200000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from oomucb import LockSpec, PolicyTree, RngStream, make_lock, make_random_undercomplete
from oomucb.pomdp import simulate_batch


def bench(model, policy, n, repeat, backend):
    best = np.inf
    for r in range(repeat):
        t0 = time.perf_counter()
        simulate_batch(model, policy, RngStream(r), n, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cases = [
        ("lock H=4 A=2", make_lock(LockSpec(H=4, A=2, variant="undercomplete", seed=0))),
        ("random S=3 O=4 A=3 H=6", make_random_undercomplete(3, 4, 3, 6, seed=0)),
    ]
    print(f"{'case':<26}{'cython s':>10}{'python s':>10}{'speedup':>9}  identical")
    for name, m in cases:
        pol = PolicyTree.from_function(lambda obs: sum(obs) % m.A, m.H, m.O, m.A)
        a = simulate_batch(m, pol, RngStream(0), 20_000, backend="cython")
        b = simulate_batch(m, pol, RngStream(0), 20_000, backend="python")
        same = np.array_equal(a.observations, b.observations)
        tc = bench(m, pol, args.episodes, args.repeat, "cython")
        tp = bench(m, pol, args.episodes, args.repeat, "python")
        print(f"{name:<26}{tc:>10.4f}{tp:>10.4f}{tp / tc:>9.1f}  {same}")


if __name__ == "__main__":
    main()
