"""Compare the compiled and pure-numpy kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--rows 1000000] [--k 5] [--repeat 3]

Times the sorted AW search and the even-df chi-square tail on each available
backend, checks that both backends agree, and times an end-to-end null table
build in a subprocess per backend (selected with ``AWFISHER_PURE_PYTHON``).
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from awfisher import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_table_build(k, draws, pure):
    env = dict(os.environ, AWFISHER_PURE_PYTHON="1" if pure else "0")
    code = (
        "import time; from awfisher.nulldist import build_null_table; "
        f"t = time.perf_counter(); build_null_table({k}, {draws}, seed=1, threads=1); "
        "print(time.perf_counter() - t)"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=1_000_000)
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    logp = np.log(1.0 - rng.random((args.rows, args.k)))
    t = rng.uniform(0.0, 200.0, args.rows)
    h = rng.integers(1, args.k + 1, args.rows)

    print(f"rows={args.rows} k={args.k} best of {args.repeat}")
    results = {}
    for backend in kernels.available_backends():
        t_aw = best_of(lambda: kernels.aw_sorted_batch(logp, backend=backend), args.repeat)
        t_sf = best_of(lambda: kernels.chi2_even_log_sf_many(t, h, backend=backend), args.repeat)
        results[backend] = (t_aw, t_sf)
        print(f"  {backend:7s} aw_sorted_batch {t_aw:8.3f}s   chi2_even_log_sf {t_sf:8.3f}s")

    if len(results) == 2:
        (ca, cs), (pa, ps) = results["cython"], results["python"]
        print(f"  speedup aw_sorted_batch x{pa / ca:.1f}, chi2_even_log_sf x{ps / cs:.1f}")
        a = kernels.aw_sorted_batch(logp[:100_000], backend="cython")
        b = kernels.aw_sorted_batch(logp[:100_000], backend="python")
        same_w = np.array_equal(a[1], b[1])
        max_diff = float(np.max(np.abs(a[0] - b[0])))
        print(f"  backends agree: weights identical={same_w}, max |d log L|={max_diff:.2e}")

    print(f"null table build, k={args.k}, draws={args.rows}, 1 thread")
    for pure in ([False, True] if len(results) == 2 else [True]):
        name = "python" if pure else "cython"
        print(f"  {name:7s} {bench_table_build(args.k, args.rows, pure):8.3f}s")


if __name__ == "__main__":
    main()
