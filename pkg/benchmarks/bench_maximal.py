"""Compare the compiled and pure-Python ball-sum kernels.

    python3 benchmarks/bench_maximal.py [--sizes 16 32 64] [--repeat 3]

Prints one line per (size, operator, backend) with the best wall time, and
checks that both backends return identical arrays.
"""
import argparse
import time

import numpy as np

from reglab import maximal_ops as mx


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--alpha", type=float, default=0.5)
    args = ap.parse_args(argv)
    backends = mx.available_backends()
    if len(backends) < 2:
        print("compiled kernel not built; only the Python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'N':>4} {'operator':<10} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for N in args.sizes:
        h = 1 / N
        f = rng.random((N, N)) * (rng.random((N, N)) < 0.5)
        mx.radius_table((N, N), h)  # one-off table build, excluded from timings
        ops = {
            "M_alpha": lambda: mx.fractional_maximal(f, args.alpha, h),
            "cutoff": lambda: mx.cutoff_maximal(f, 0.25, args.alpha, h),
            "tail": lambda: mx.tail_maximal(f, 0.25, args.alpha, h),
        }
        for name, fn in ops.items():
            times, outs = [], []
            for b in backends:
                mx.set_backend(b)
                t, out = best_time(fn, args.repeat)
                times.append(t)
                outs.append(out)
            same = all(np.array_equal(outs[0], o) for o in outs[1:])
            speed = f"{times[-1] / times[0]:8.1f}x" if len(times) > 1 else ""
            print(f"{N:>4} {name:<10} " + " ".join(f"{t:10.4f}" for t in times)
                  + f" {speed}" + ("" if same else "  MISMATCH"))
    mx.set_backend(backends[0])


if __name__ == "__main__":
    main()
