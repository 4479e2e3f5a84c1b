"""Compare the compiled and numpy activation-table backends.

Usage: python benchmarks/bench_kernels.py [--points N] [--features J] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from rkrfm import _kernels


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--features", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    xt = rng.uniform(-1, 1, (args.points, 2))
    w = rng.uniform(-1.7, 1.7, (args.features, 2))
    b = rng.uniform(-1.7, 1.7, args.features)
    backends = ["numpy"] + (["compiled"] if _kernels.BACKEND == "compiled" else [])
    print(f"tables of order 4 for {args.points} points x {args.features} features "
          f"(default backend: {_kernels.BACKEND})")
    for is_tanh, name in ((True, "tanh"), (False, "cos")):
        times = {}
        for be in backends:
            run = lambda: _kernels.feature_tables(xt, w, b, 4, is_tanh, backend=be)
            run()
            times[be] = min(timeit.repeat(run, number=1, repeat=args.repeat))
        line = "  ".join(f"{be} {t * 1e3:7.2f} ms" for be, t in times.items())
        if len(times) == 2:
            line += f"  speedup {times['numpy'] / times['compiled']:.2f}x"
        print(f"{name:5s} {line}")


if __name__ == "__main__":
    main()
