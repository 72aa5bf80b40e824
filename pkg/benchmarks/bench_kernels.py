"""Compiled vs pure-Python hot loops.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times the cycle loop on a contended 8-core schedule and the split search on a
448 x 80 matrix, checks both backends agree, and prints the speed-up.
"""

import argparse
import random
import sys
import timeit

import numpy as np

from pulse import _kernels_py
from pulse.synthgen import KernelSpec, _STATE_OF_SLOT

try:
    from pulse import _kernels
except ImportError:
    _kernels = None


def loop_case():
    spec = KernelSpec("bench", "fp32", 32768, total_iterations=4096, alu_ops=6, fp_ops=3, l1_ops=5)
    body = [_STATE_OF_SLOT[code] for code, _ in spec.body()]
    work = [512] * 8
    fpu_of = [c // 2 for c in range(8)]

    def run(mod):
        rng = random.Random(7)
        return mod.run_loop(body, work, fpu_of, 4, 0.3, rng.random, 0)
    return run


def split_case():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(448, 80)).round(2)
    y = rng.integers(0, 8, size=448)
    idx = np.arange(448)

    def run(mod):
        return mod.best_split(X, y, idx, 8, 1)
    return run


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':<12}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for name, case in (("run_loop", loop_case()), ("best_split", split_case())):
        a, b = case(_kernels_py), case(_kernels)
        same = all(np.array_equal(x, y) for x, y in zip(a, b)) if name == "run_loop" else a == b
        if not same:
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        tp = min(timeit.repeat(lambda: case(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: case(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<12}{tp:>12.2f}{tc:>12.2f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
