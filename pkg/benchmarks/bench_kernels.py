"""Time the compiled and numpy RK4 waveguide kernels on identical inputs.

    python benchmarks/bench_kernels.py [--modes 20 50 100] [--steps 200]
"""

import argparse
import time

import numpy as np

from nsgate import _backend
from nsgate.waveguide import BathDiscretization, WavepacketSpec


def bench(kernel, N, steps, repeats):
    rng = np.random.default_rng(0)
    D = np.ascontiguousarray(BathDiscretization.for_packet(WavepacketSpec(0.15, span_k=4), N).detunings)
    y0 = rng.normal(size=4 + 2 * N + N * N) + 0j
    gw = np.full(2 * steps + 1, 0.02)
    gq = np.full(2 * steps + 1, 1.0)
    best = np.inf
    for _ in range(repeats):
        y = y0.copy()
        t = time.perf_counter()
        kernel(y, D, gw, gq, 0.01, steps, np.zeros(7))
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--modes", type=int, nargs="+", default=[20, 50, 100])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    kernels = _backend.kernels()
    print(f"{'N':>5} " + " ".join(f"{k:>12}" for k in kernels) + "   speedup")
    for N in args.modes:
        times = {k: bench(f, N, args.steps, args.repeats) for k, f in kernels.items()}
        row = " ".join(f"{times[k] * 1e3:10.2f}ms" for k in kernels)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{N:>5} {row}   {speed:6.1f}x")


if __name__ == "__main__":
    main()
