"""Throughput of the numba and numpy pair-walk backends.

Usage: python benchmarks/bench_backends.py [--steps 4096] [--reals 256]

Both backends are run on the same walker keys; their outputs are checked for
equality before timings are printed (ns per walker step).
"""

import argparse
import time

import numpy as np

from walkoverlap import rng
from walkoverlap._accel import HAVE_NUMBA
from walkoverlap.simulator import run_pairs


def time_backend(backend, dim, steps, keys1, keys2, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run_pairs(dim, 5, steps, None, keys1, keys2, backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=4096)
    p.add_argument("--reals", type=int, default=256)
    p.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    streams = np.arange(args.reals)
    k1 = rng.walker_keys(1, streams, 0)
    k2 = rng.walker_keys(1, streams, 1)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    if HAVE_NUMBA:
        run_pairs(1, 5, 16, None, k1[:2], k2[:2], "numba")  # compile outside the timing

    walker_steps = 2 * args.steps * args.reals
    print(f"{'dim':>3} {'backend':>7} {'seconds':>9} {'ns/step':>9}")
    for dim in args.dims:
        outputs = {}
        for b in backends:
            sec, outputs[b] = time_backend(b, dim, args.steps, k1, k2, args.repeat)
            print(f"{dim:>3} {b:>7} {sec:>9.3f} {sec / walker_steps * 1e9:>9.1f}")
        if len(outputs) == 2:
            same = all(np.array_equal(a, c) for a, c in zip(outputs["numba"], outputs["numpy"]))
            print(f"    backends identical: {same}")


if __name__ == "__main__":
    main()
