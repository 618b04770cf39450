"""Time the numba and numpy kernel backends against each other.

Kernel timings call both implementations in one process on the desk-scale
benchmark data; the end-to-end timing runs 10 FSVRG rounds in a fresh
interpreter per backend (``FEDOPT_BACKEND`` is read at import), including
numba's compile/cache-load cost.

    python benchmarks/bench_backends.py [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from fedopt import benchmark_spec, generate_synthetic, kernels
from fedopt.kernels import numpy_impl

E2E = """
import time
t = time.perf_counter()
from fedopt import *
tr, _ = generate_synthetic(benchmark_spec(0))
p = make_partition(tr, PartitionSpec('clustered', 50))
run_experiment(ExperimentConfig(tr, 'fsvrg', 10, p, oracle=False))
print(time.perf_counter() - t)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.numba_impl is None:
        sys.exit("numba backend unavailable (is FEDOPT_BACKEND=numpy set?)")

    train, _ = generate_synthetic(benchmark_spec(0))
    rng = np.random.default_rng(0)
    csr = (train.indptr, train.indices, train.data)
    rows = rng.permutation(train.n).astype(np.int64)
    w = rng.standard_normal(train.dim)
    coef = rng.standard_normal(train.n)
    order = rows[:1000]
    anchor, adir = rng.standard_normal((2, train.dim))
    scale = np.ones(train.dim)

    cases = {
        "row_dots (n rows)": lambda m: m.row_dots(*csr, rows, w),
        "rows_axpy (n rows)": lambda m: m.rows_axpy(*csr, rows, coef, train.dim),
        "svrg_pass (1000 steps)": lambda m: m.svrg_pass(*csr, train.y, m.LOGISTIC, order, w,
                                                        anchor, adir, 1e-3, 1e-4, scale),
    }
    print(f"data: n={train.n} d={train.dim} nnz={train.data.size}")
    print(f"{'kernel':<24}{'numpy':>12}{'numba':>12}{'speedup':>10}  identical")
    for name, call in cases.items():
        call(kernels.numba_impl)  # compile outside the timing
        t_np, a = best_of(lambda: call(numpy_impl), args.repeat)
        t_nb, b = best_of(lambda: call(kernels.numba_impl), args.repeat)
        print(f"{name:<24}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms{t_np / t_nb:>9.1f}x  "
              f"{a.tobytes() == b.tobytes()}")

    print("end to end, 10 FSVRG rounds in a fresh process:")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, FEDOPT_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                             text=True, check=True).stdout
        print(f"  {backend:<6}{float(out):>8.2f}s")


if __name__ == "__main__":
    main()
