#!/usr/bin/env python3
"""Compare the compiled kernels with the numpy fallback.

Prints CSV ``kernel,size,backend,median_us,max_abs_diff`` to stdout, where
``max_abs_diff`` is measured against the numpy result on the same input.

    python benchmarks/bench_backends.py --sizes 1000,100000 --trials 7
"""
import argparse
import csv
import sys
import time

import numpy as np

from epiprox._backend import available_backends


def _median_us(fn, trials):
    fn()
    ts = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return 1e6 * float(np.median(ts))


def _cases(size, block, rng):
    L = max(1, size // block)
    n = L * block
    off = block * np.arange(L + 1, dtype=np.int64)
    y = rng.normal(0, 10, n)
    zeta = rng.normal(0, 10, L)
    taus = rng.uniform(0.5, 2.0, n)
    return {
        "prox_power": lambda k: k.prox_power_max_sq(y, 1.3, 1.7, 0.4),
        "epi_l2": lambda k: k.epi_l2_blocks(y, off, np.ones(L), zeta),
        "epi_linf": lambda k: k.epi_linf_blocks(y, off, taus, zeta),
        "l1inf_ball": lambda k: k.l1inf_ball(y, off, 0.5 * float(np.abs(y).reshape(L, block).max(1).sum()), 1e-6),
    }, n


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,100000")
    ap.add_argument("--block", type=int, default=14)
    ap.add_argument("--trials", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kernel", "size", "backend", "median_us", "max_abs_diff"])
    for size in (int(s) for s in args.sizes.split(",")):
        cases, n = _cases(size, args.block, np.random.default_rng(args.seed))
        for name, run in cases.items():
            ref = _first(run(backends["python"]))
            for bname, mod in sorted(backends.items()):
                diff = float(np.max(np.abs(_first(run(mod)) - ref)))
                w.writerow([name, n, bname, f"{_median_us(lambda: run(mod), args.trials):.2f}", f"{diff:.3e}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
