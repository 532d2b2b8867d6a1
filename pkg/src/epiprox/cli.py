"""Command-line entry point: ``epiprox {restore,pulse,bench-proj,selftest}``.

Exit codes: 0 success, 1 bad input, 2 iteration budget exhausted,
3 infeasible hard constraints.
"""
import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._backend import default_threads

EXIT_OK, EXIT_INPUT, EXIT_MAXITER, EXIT_INFEASIBLE = 0, 1, 2, 3


def _fail(msg, code=EXIT_INPUT):
    print(f"epiprox: error: {msg}", file=sys.stderr)
    return code


def _dump_json(obj, path):
    # repr-based floats keep full double precision
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _threads(args):
    return args.threads if args.threads else default_threads()


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON in {path}: {exc}")


# ---------------------------------------------------------------------------

def cmd_restore(args):
    from .restoration import RestorationConfig, run_experiment, write_pgm

    try:
        raw = _load_json(args.config)
        cfg = RestorationConfig.from_dict(raw, seed=args.seed)
        base = Path(args.config).resolve().parent
        res = run_experiment(cfg, method=args.method, base_dir=base, num_threads=_threads(args))
    except (ValueError, TypeError, KeyError, OSError) as exc:
        return _fail(str(exc))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "restored.pgm", res.image)
    timing = not args.no_timing
    metrics = {
        "method": args.method,
        "constraint": cfg.constraint_type,
        "eta": res.eta,
        "snr_db": res.snr_db,
        "ssim": res.ssim,
        "zero_filled_snr_db": res.extra.get("zero_filled_snr_db"),
        "objective": res.objective,
        "violation": res.violation,
        "iters": res.iters,
        "converged": res.converged,
        "wall_time_s": res.wall_time_s if timing else None,
    }
    _dump_json(metrics, out / "metrics.json")
    res.trace.to_csv(out / "trace.csv", include_time=timing)
    print(f"restored {cfg.constraint_type} ({args.method}): SNR {res.snr_db:.3f} dB, "
          f"SSIM {res.ssim:.4f}, {res.iters} iterations")
    return EXIT_OK if res.converged else EXIT_MAXITER


def _pulse_spec(raw, args):
    from .pulse import PulseSpec

    d = dict(raw.get("pulse", raw.get("spec", {})))
    if args.beta is not None:
        d["beta"] = args.beta
    if args.epsilon is not None:
        d["epsilon"] = args.epsilon
    known = set(PulseSpec.__dataclass_fields__)
    bad = set(d) - known
    if bad:
        raise ValueError(f"unknown pulse keys {sorted(bad)}")
    return PulseSpec(**d)


def cmd_pulse(args):
    from .pulse import PulseInfeasible, build_index_sets, design_pulse, spectrum_report
    from .solver import SolverConfig

    try:
        raw = _load_json(args.config) if args.config else {}
        spec = _pulse_spec(raw, args)
        sol = dict(raw.get("solver", {}))
        sol.setdefault("max_iters", 20000)
        sol.setdefault("stop_rel", 1e-8)
        if args.seed is not None:
            sol["seed"] = args.seed
        config = SolverConfig(**sol)
        sets = build_index_sets(spec)
    except (ValueError, TypeError) as exc:
        return _fail(str(exc))

    try:
        x, report = design_pulse(spec, config, num_threads=_threads(args))
    except PulseInfeasible as exc:
        print(json.dumps({"infeasible": str(exc), "residual": exc.residual}, indent=2))
        return _fail(str(exc), EXIT_INFEASIBLE)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pulse.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "time_ms", "value"])
        for n, v in enumerate(x):
            w.writerow([n, repr(1000.0 * (n - spec.center) / spec.fs), repr(float(v))])
    full = replace(spec, energy_mu=report.mu, epsilon=report.epsilon)
    with open(out / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "hz", "magnitude"])
        for k, hz, mag, _ in spectrum_report(x, full, sets):
            w.writerow([k, repr(hz), repr(mag)])
    _dump_json(report.to_dict(), out / "report.json")
    state = "active" if report.c1_active else "inactive"
    print(f"pulse: ||x|| = {report.norm:.6f} (mu {report.mu:.6f}), mask excess "
          f"{report.mask_excess_sum:.6g} / eps {report.epsilon:.6g}, C1 {state}, {report.iters} iterations")
    if not report.feasible:
        print(json.dumps({"infeasible": "constraints not met at the solution",
                          "residuals": report.residuals}, indent=2))
        return _fail("no pulse satisfies all constraints within tolerance", EXIT_INFEASIBLE)
    return EXIT_OK if report.converged else EXIT_MAXITER


def bench_projection(p, sizes, trials, seed, block=14, tol=1e-6, num_threads=1):
    """Median timings (microseconds) of one epigraphical vs one direct projection.

    Returns rows ``(size, epi_us, direct_us, ratio)`` with ``ratio`` the
    direct time divided by the epigraphical time.
    """
    from . import ballproj
    from .epigraph import EpiStackProjector, EuclideanNorm, WeightedInfNorm
    from .prox import HalfSpace, project_halfspace

    rows = []
    for size in sizes:
        rng = np.random.default_rng(seed)
        L = -(-size // block)
        off = np.minimum(block * np.arange(L + 1), size)
        sizes_l = np.diff(off)
        y = rng.normal(0.0, 10.0, size)
        if p == "2":
            kinds = EuclideanNorm(1.0)
            hv = np.sqrt(np.add.reduceat(y * y, off[:-1]))
        else:
            kinds = [WeightedInfNorm(np.ones(m)) for m in sizes_l]
            hv = np.maximum.reduceat(np.abs(y), off[:-1])
        eta = 0.5 * float(hv.sum())
        zeta = hv * rng.uniform(0.3, 1.2, L)
        stack = EpiStackProjector(off, kinds, num_threads=num_threads)
        hs = HalfSpace(L, eta)

        def run_epi():
            stack(y, zeta)
            project_halfspace(hs, zeta)

        if p == "2":
            def run_direct():
                ballproj.project_l12_ball(off, eta, y)
        else:
            def run_direct():
                ballproj.project_l1inf_ball(off, eta, y, tol=tol)

        def median_us(fn):
            fn()
            ts = []
            for _ in range(trials):
                t0 = time.perf_counter()
                fn()
                ts.append(time.perf_counter() - t0)
            return 1e6 * float(np.median(ts))

        e_us, d_us = median_us(run_epi), median_us(run_direct)
        rows.append((size, e_us, d_us, d_us / e_us))
    return rows


def cmd_bench_proj(args):
    p = "inf" if args.p.lower() in ("inf", "infinity") else "2"
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
    except ValueError:
        return _fail(f"bad --sizes {args.sizes!r}")
    if not sizes or min(sizes) < 1 or args.trials < 1:
        return _fail("sizes and trials must be positive")
    rows = bench_projection(p, sizes, args.trials, args.seed, args.block, args.tol, _threads(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size", "epi_us", "direct_us", "ratio"])
    for r in rows:
        w.writerow([r[0], f"{r[1]:.3f}", f"{r[2]:.3f}", f"{r[3]:.4f}"])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_selftest(args):
    from . import selftest
    from ._backend import BACKEND

    print(f"backend: {BACKEND}")
    suites = args.suites.split(",") if args.suites else None
    results = selftest.run(seed=args.seed, suites=suites)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed and results else 1


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="epiprox", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads for block projections (default: $EPIPROX_THREADS or CPU count)")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("restore", help="run an image restoration experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out-dir", default=".")
    r.add_argument("--method", choices=["epigraphical", "direct"], default="epigraphical")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--no-timing", action="store_true", help="omit wall-clock fields from outputs")
    r.set_defaults(func=cmd_restore)

    pz = sub.add_parser("pulse", help="design a pulse")
    pz.add_argument("--config", default=None)
    pz.add_argument("--out-dir", default=".")
    pz.add_argument("--beta", type=float, default=None)
    pz.add_argument("--epsilon", type=float, default=None)
    pz.add_argument("--seed", type=int, default=None)
    pz.set_defaults(func=cmd_pulse)

    b = sub.add_parser("bench-proj", help="time epigraphical vs direct ball projections")
    b.add_argument("--p", default="inf", choices=["2", "inf"])
    b.add_argument("--sizes", default="100000")
    b.add_argument("--block", type=int, default=14)
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench_proj)

    s = sub.add_parser("selftest", help="run the built-in oracle suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--suites", default=None, help="comma-separated subset")
    s.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        return _fail("--threads must be >= 1")
    if args.threads is not None:
        os.environ["EPIPROX_THREADS"] = str(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
