"""Built-in oracle and invariant checks, grouped in suites.

Every check compares an error to a tolerance multiplied by the
``EPIPROX_SELFTEST_TOL_SCALE`` environment variable (default 1), so the
harness itself can be exercised by shrinking the tolerances.
"""
import os
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from . import ballproj, oracles
from . import epigraph as epi
from .constraints import BlockLayout, DecomposableConstraint, check_membership
from .operators import identity
from .prox import (Box, HalfSpace, PowerProxParams, power_root_residual, project_box,
                   project_halfspace, project_l1_ball, project_l2_ball, prox_power_max_sq)
from .solver import SolverConfig, SplitConstraint, build_split_problem, solve


def tol_scale():
    return float(os.environ.get("EPIPROX_SELFTEST_TOL_SCALE", "1"))


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    error: float
    tol: float


class _Suite:
    def __init__(self, name):
        self.name = name
        self.results: List[CheckResult] = []

    def check(self, name, error, tol):
        tol_eff = tol * tol_scale()
        err = float(error)
        self.results.append(CheckResult(self.name, name, bool(np.isfinite(err) and err <= tol_eff), err, tol_eff))


def _suite_prox(s, rng):
    worst = 0.0
    for _ in range(2000):
        prm = PowerProxParams(rng.uniform(0.1, 5), rng.choice([1.0, 1.5, 2.0, 3.0]), rng.uniform(-10, 10))
        y = rng.uniform(-10, 10)
        p = prox_power_max_sq(prm, y)
        worst = max(worst, power_root_residual(prm, y, p) / (1 + abs(y)))
    s.check("root residual", worst, 1e-12)
    worst = 0.0
    for _ in range(50):
        t, b, z, y = rng.uniform(0.2, 3), rng.choice([1.0, 2.0]), rng.uniform(-5, 5), rng.uniform(-10, 10)
        ref = oracles.scalar_prox_bruteforce(t, b, z, y)
        worst = max(worst, abs(prox_power_max_sq(PowerProxParams(t, b, z), y) - ref))
    s.check("brute-force prox", worst, 1e-6)
    ys = rng.uniform(-10, 10, 500)
    prm = PowerProxParams(1.3, 1.7, 0.4)
    s.check("odd symmetry", np.max(np.abs(prox_power_max_sq(prm, -ys) + prox_power_max_sq(prm, ys))), 0.0)
    srt = np.sort(ys)
    s.check("monotone", max(0.0, -np.min(np.diff(prox_power_max_sq(prm, srt)))), 0.0)

    projectors = {
        "box": lambda x: project_box(Box(-1.0, 2.0), x),
        "halfspace": lambda x: project_halfspace(HalfSpace(x.size, 1.5), x),
        "l2 ball": lambda x: project_l2_ball(2.0, x),
        "l1 ball": lambda x: project_l1_ball(2.0, x),
    }
    for name, P in projectors.items():
        idem, firm = 0.0, 0.0
        for _ in range(200):
            a, b = rng.uniform(-5, 5, 6), rng.uniform(-5, 5, 6)
            pa, pb = P(a), P(b)
            idem = max(idem, np.linalg.norm(P(pa) - pa) / (1 + np.linalg.norm(a)))
            firm = max(firm, np.sum((pa - pb) ** 2) - (pa - pb) @ (a - b))
        s.check(f"{name} idempotent", idem, 1e-10)
        s.check(f"{name} firmly nonexpansive", max(firm, 0.0), 1e-9)


def _random_kinds(rng, m):
    return {
        "scalar power b=1": (epi.ScalarPower(rng.uniform(0.2, 3), 1.0), 1),
        "scalar power b=1.5": (epi.ScalarPower(rng.uniform(0.2, 3), 1.5), 1),
        "scalar power b=2": (epi.ScalarPower(rng.uniform(0.2, 3), 2.0), 1),
        "euclidean norm": (epi.EuclideanNorm(rng.uniform(0.2, 3)), m),
        "weighted inf norm": (epi.WeightedInfNorm(rng.uniform(0.2, 3, m)), m),
        "dist ball b=1": (epi.DistanceToSet(rng.uniform(0.2, 3), 1.0,
                                            epi.Ball2(rng.uniform(-5, 5, m), rng.uniform(0, 3))), m),
        "dist box b=2": (epi.DistanceToSet(rng.uniform(0.2, 3), 2.0,
                                           epi.BoxSet(-rng.uniform(0, 3, m), rng.uniform(0, 3, m))), m),
        "dist point b=2": (epi.DistanceToSet(rng.uniform(0.2, 3), 2.0, epi.Point(rng.uniform(-5, 5, m))), m),
    }


def _suite_epigraph(s, rng, n=200):
    worst, feas = {}, 0.0
    for _ in range(n):
        m = int(rng.integers(1, 9))
        for name, (kind, size) in _random_kinds(rng, m).items():
            y, z = rng.uniform(-10, 10, size), rng.uniform(-10, 10)
            p, th = kind.project(y, z)
            po, tho = oracles.epigraph_projection(kind, y, z)
            err = np.sqrt(np.sum((np.atleast_1d(p) - po) ** 2) + (th - tho) ** 2)
            worst[name] = max(worst.get(name, 0.0), err)
            feas = max(feas, kind.value(p) - th)
    for name, err in worst.items():
        s.check(f"oracle {name}", err, 1e-6)
    s.check("feasibility", max(feas, 0.0), 1e-10)

    hits = 0
    for _ in range(500):
        m = int(rng.integers(1, 9))
        hits = max(hits, abs(len(epi.linf_mbar_candidates(rng.uniform(0.2, 3, m), rng.uniform(-10, 10, m),
                                                           rng.uniform(-10, 10))) - 1))
    s.check("unique split index", hits, 0)

    tri = 0.0
    for _ in range(200):
        y, z = rng.uniform(-10, 10), rng.uniform(-10, 10)
        a = epi.project_epi_generic_scalar(PowerProxParams(1.0, 1.0), y, z)
        b = epi.project_epi_l2(1.0, [y], z)
        c = epi.project_epi_dist(1.0, 1.0, epi.Point(np.zeros(1)), [y], z)
        tri = max(tri, abs(a[0] - b[0][0]), abs(a[1] - b[1]), abs(a[0] - c[0][0]), abs(a[1] - c[1]))
    s.check("consistency triangle", tri, 1e-12)


def _suite_ballproj(s, rng):
    w12, w1i, feas = 0.0, 0.0, 0.0
    for _ in range(200):
        sizes = rng.integers(1, 4, size=rng.integers(1, 4))
        off = np.concatenate([[0], np.cumsum(sizes)])
        y = rng.uniform(-5, 5, off[-1])
        eta = rng.uniform(0, 6)
        p2 = ballproj.project_l12_ball(off, eta, y)
        pi = ballproj.project_l1inf_ball(off, eta, y)
        w12 = max(w12, np.linalg.norm(p2 - oracles.l12_ball(off, eta, y)))
        w1i = max(w1i, np.linalg.norm(pi - oracles.l1inf_ball(off, eta, y)))
        blocks = [(a, b) for a, b in zip(off[:-1], off[1:])]
        feas = max(feas, sum(np.linalg.norm(p2[a:b]) for a, b in blocks) - eta * (1 + 1e-8),
                   sum(np.abs(pi[a:b]).max() for a, b in blocks) - eta * (1 + 1e-8))
    s.check("l12 ball oracle", w12, 1e-6)
    s.check("l1inf ball oracle", w1i, 1e-6)
    s.check("ball feasibility", max(feas, 0.0), 0.0)


def _suite_solver(s, rng):
    z = np.array([2.0, -1.0])
    c = DecomposableConstraint(BlockLayout.contiguous([1, 1]), (epi.ScalarPower(1.0, 1.0),) * 2, 0.5)
    prob = build_split_problem(2, lambda x: 2 * (x - z), 2.0, lambda x: float(np.sum((x - z) ** 2)),
                               lambda x: np.clip(x, 0, 1), np.zeros(2), split=[SplitConstraint(identity(2), c)])
    w, tr = solve(prob, SolverConfig(max_iters=20000, stop_rel=1e-10))
    s.check("kkt instance", np.max(np.abs(w[:2] - [0.5, 0.0])), 1e-5)
    s.check("converged", 0.0 if tr.converged else 1.0, 0.0)
    w2, tr2 = solve(prob, SolverConfig(max_iters=20000, stop_rel=1e-10))
    same = np.array_equal(w, w2) and tr.objective == tr2.objective
    s.check("deterministic", 0.0 if same else 1.0, 0.0)


def _suite_restoration(s, rng):
    from .restoration import (DegradationSpec, build_tv_constraint, degrade, restore, snr_db,
                              ssim, synthetic_blocks, zero_filled)
    truth = synthetic_blocks(12)
    zobs, mask, A = degrade(truth, DegradationSpec(noise_sigma=5.0, seed=3))
    model = build_tv_constraint(12, 12, "2", 0.0)
    model = model.with_eta(0.8 * model.value(truth.pixels))
    cfg = SolverConfig(max_iters=20000, stop_rel=1e-8)
    r_e = restore(zobs, mask, A, model, config=cfg, ground_truth=truth)
    r_d = restore(zobs, mask, A, model, config=cfg, method="direct", ground_truth=truth)
    s.check("epigraphical vs direct objective", abs(r_e.objective - r_d.objective) / r_d.objective, 1e-3)
    s.check("constraint", max(r_e.violation, 0.0) / model.eta, 1e-6)
    box = max(0.0, -r_e.image.pixels.min(), r_e.image.pixels.max() - 255.0)
    s.check("box", box, 1e-8)
    s.check("beats zero fill", max(0.0, snr_db(truth.pixels, zero_filled(zobs, mask)) - r_e.snr_db), 0.0)
    a = rng.uniform(0, 255, (16, 16))
    b = a + rng.normal(0, 10, a.shape)
    s.check("ssim symmetric", abs(ssim(a, b) - ssim(b, a)), 1e-12)
    s.check("ssim identity", abs(ssim(a, a) - 1.0), 1e-12)


def _suite_pulse(s, rng):
    from .pulse import PulseSpec, build_index_sets, design_pulse, spectrum_report
    spec = PulseSpec()
    sets = build_index_sets(spec)
    s.check("mask bins", 0.0 if (sets.D1[0], sets.D1[-1], sets.D1.size) == (61, 256, 196) else 1.0, 0.0)
    s.check("null bins", 0.0 if np.array_equal(sets.D2, np.arange(0, 257, 10)) else 1.0, 0.0)
    x = rng.normal(size=spec.N)
    rep = spectrum_report(x, spec, sets)
    s.check("parseval", abs(sum(r[2] ** 2 for r in rep) - x @ x) / (x @ x), 1e-10)
    xp, report = design_pulse(spec)
    c = spec.center
    s.check("centre sample", abs(xp[c] - 1.0), 1e-8)
    s.check("zero areas", np.max(np.abs(xp[sets.D3])), 1e-8)
    s.check("energy", max(0.0, report.norm - report.mu * (1 + 1e-8)), 0.0)
    s.check("relaxed mask", max(0.0, report.mask_excess_sum - report.epsilon * (1 + 1e-4)), 0.0)


SUITES = {
    "prox": _suite_prox,
    "epigraph": _suite_epigraph,
    "ballproj": _suite_ballproj,
    "solver": _suite_solver,
    "restoration": _suite_restoration,
    "pulse": _suite_pulse,
}


def run(seed=0, suites=None, out=print):
    """Run the suites, print a table and return the list of results."""
    results = []
    for name, fn in SUITES.items():
        if suites and name not in suites:
            continue
        s = _Suite(name)
        t0 = time.perf_counter()
        try:
            fn(s, np.random.default_rng(seed))
        except Exception as exc:  # a crashing suite is a failing suite
            s.results.append(CheckResult(name, f"crashed: {exc!r}", False, float("nan"), 0.0))
        dt = time.perf_counter() - t0
        ok = all(r.passed for r in s.results)
        out(f"[{'PASS' if ok else 'FAIL'}] {name:<12s} {len(s.results):3d} checks  {dt:6.2f}s")
        for r in s.results:
            if not r.passed:
                out(f"    FAIL {r.name}: error {r.error:.3e} > tol {r.tol:.3e}")
        results.extend(s.results)
    return results
