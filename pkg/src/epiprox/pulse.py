"""Minimum-energy pulse design under spectral and temporal constraints.

Constraints on a real pulse ``x`` of even length ``N`` centred at ``N/2``:

* C1 (relaxed mask): ``sum_{k in D1} d(chi_k, B_gamma)**beta <= epsilon``
  where ``chi = DFT(x)`` (unitary) and ``B_gamma`` is the disk of radius
  ``gamma`` in the complex plane,
* C2 (nulls): ``chi_k = 0`` for ``k in D2``,
* C3 (energy): ``||x|| <= mu``,
* C4 (shape): ``x[N/2 + j] = x[N/2 - j]`` and ``x[N/2] = 1``,
* C5 (zero areas): ``x[n] = 0`` for ``n in D3``.

The objective is ``||x||^2``. C4 and C5 are projected onto directly, C1 is
split epigraphically and the rest are dualized.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .constraints import BlockLayout, DecomposableConstraint
from .epigraph import Ball2, DistanceToSet
from .operators import identity, make_unitary_dft
from .prox import project_l2_ball
from .solver import SolverConfig, SplitConstraint, build_split_problem, solve

# ratio of the relaxation budget to the mask excess of the C1-free design
DEFAULT_EPSILON_RATIO = 0.6
DEFAULT_MU_FACTOR = 1.1
INACTIVE_MARGIN = 1e-3
# C1 is solved as sum(tau * d**beta) <= tau * epsilon with tau = max(1, C1_BUDGET_SCALE / epsilon):
# the same set, with auxiliary heights of order one, which the fixed-step solver prefers
C1_BUDGET_SCALE = 7.0
# post-solve feasibility tolerances (relative to epsilon and mu for C1 and C3)
FEAS_TOL = {"C1": 1e-3, "C2": 1e-6, "C3": 1e-6, "C4": 1e-8, "C5": 1e-8}


class PulseInfeasible(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PulseSpec:
    N: int = 512
    fs: float = 2560.0
    mask_limit: float = 10 ** (-1.5)
    mask_above_hz: float = 300.0
    null_every_hz: float = 50.0
    energy_mu: Optional[float] = None
    zero_every_ms: float = 3.125
    duration_ms: float = 50.0
    beta: float = 1.0
    epsilon: Optional[float] = None
    c1_scale: Optional[float] = None

    def __post_init__(self):
        if self.N < 2 or self.N % 2:
            raise ValueError("N must be an even integer >= 2")
        if not (self.fs > 0 and self.null_every_hz > 0 and self.zero_every_ms > 0
                and self.duration_ms > 0 and self.mask_limit > 0):
            raise ValueError("rates, durations and the mask limit must be positive")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.energy_mu is not None and not self.energy_mu > 0:
            raise ValueError("energy_mu must be positive")
        if self.c1_scale is not None and not self.c1_scale > 0:
            raise ValueError("c1_scale must be positive")

    @property
    def center(self):
        return self.N // 2


@dataclass(frozen=True)
class PulseIndexSets:
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray


def _is_int(v, tol=1e-9):
    return abs(v - round(v)) <= tol * max(1.0, abs(v))


def _grid_ok(spec, N):
    df = spec.fs / N
    return _is_int(spec.null_every_hz / df) and _is_int(spec.mask_above_hz / df)


def build_index_sets(spec: PulseSpec) -> PulseIndexSets:
    """Mask bins, null bins and zero-area time indices for ``spec``."""
    N, c = spec.N, spec.center
    if not _grid_ok(spec, N):
        admissible = next((n for n in range(2, 1 << 22, 2) if _grid_ok(spec, n)), None)
        hint = f"smallest admissible N is {admissible}" if admissible else "no even N below 2**22 works"
        raise ValueError(
            f"null_every_hz={spec.null_every_hz} and mask_above_hz={spec.mask_above_hz} are not "
            f"multiples of the bin spacing fs/N={spec.fs / N}; {hint}")
    step = spec.zero_every_ms * spec.fs / 1000.0
    half = spec.duration_ms * spec.fs / 1000.0 / 2.0
    if not _is_int(step) or not _is_int(half):
        raise ValueError("zero_every_ms and duration_ms/2 must be whole numbers of samples")
    step, half = int(round(step)), int(round(half))
    if half >= c:
        raise ValueError("pulse duration does not fit in N samples")

    df = spec.fs / N
    above = int(round(spec.mask_above_hz / df))
    null = int(round(spec.null_every_hz / df))
    k = np.arange(N // 2 + 1)
    D1 = k[(k > above) & (k >= 1)]
    D2 = k[k % null == 0]
    n = np.arange(N)
    off = np.abs(n - c)
    D3 = n[(off > half) | ((off > 0) & (off % step == 0) & (off <= half))]
    return PulseIndexSets(D1, D2, D3)


def _shape_projector(spec: PulseSpec, sets: PulseIndexSets):
    """Exact projection onto C4 then C5 (they commute: D3 is symmetric)."""
    N, c = spec.N, spec.center
    j = np.arange(1, c)
    lo, hi = c - j, c + j
    zero = sets.D3

    def project(x):
        out = np.array(x, dtype=float)
        avg = 0.5 * (out[lo] + out[hi])
        out[lo] = avg
        out[hi] = avg
        out[c] = 1.0
        out[zero] = 0.0
        return out

    return project


def _null_projector(spec, sets):
    """Projection onto ``{x real : chi_k = 0, k in D2}``."""
    N = spec.N
    kill = np.zeros(N, dtype=bool)
    kill[sets.D2] = True
    kill[(N - sets.D2) % N] = True

    def project(x):
        X = np.fft.fft(x)
        X[~kill] = 0.0
        return x - np.fft.ifft(X).real

    return project


def min_norm_feasible(spec, sets, iters=20000, tol=1e-13):
    """Alternating projections from 0 between C4 & C5 and C2.

    All three sets are affine, so the limit is the minimum-norm point of
    their intersection. Returns ``(x, residual, iterations)`` with the
    residual measured as the distance from the final point to C2.
    """
    shape = _shape_projector(spec, sets)
    nulls = _null_projector(spec, sets)
    x = shape(np.zeros(spec.N))
    res = np.inf
    for it in range(1, iters + 1):
        y = shape(nulls(x))
        res = float(np.linalg.norm(nulls(y) - y))
        step = float(np.linalg.norm(y - x))
        x = y
        if step <= tol * max(1.0, np.linalg.norm(x)):
            break
    return x, res, it


def mask_excess_sum(x, spec, sets):
    """``sum_{k in D1} max(|chi_k| - gamma, 0)**beta``."""
    chi = np.fft.fft(x)[sets.D1] / math.sqrt(spec.N)
    return float(np.sum(np.maximum(np.abs(chi) - spec.mask_limit, 0.0) ** spec.beta))


@dataclass
class PulseReport:
    objective: float
    norm: float
    mu: float
    epsilon: float
    beta: float
    mask_excess_sum: float
    c1_active: bool
    residuals: dict
    iters: int
    converged: bool
    preflight_residual: float
    feasible: bool = True

    def to_dict(self):
        return {
            "objective": self.objective,
            "norm": self.norm,
            "mu": self.mu,
            "epsilon": self.epsilon,
            "beta": self.beta,
            "mask_excess_sum": self.mask_excess_sum,
            "c1_active": self.c1_active,
            "residuals": dict(self.residuals),
            "iters": self.iters,
            "converged": self.converged,
            "preflight_residual": self.preflight_residual,
            "feasible": self.feasible,
        }


def resolve_defaults(spec: PulseSpec, sets=None, preflight_tol=1e-8):
    """Fill ``energy_mu`` and ``epsilon`` from the C1-free design.

    Raises :class:`PulseInfeasible` when C2, C4, C5 do not intersect, or
    when the requested ``mu`` is below the smallest feasible norm.
    """
    sets = build_index_sets(spec) if sets is None else sets
    x_min, res, _ = min_norm_feasible(spec, sets)
    if res > preflight_tol:
        raise PulseInfeasible("null, shape and zero-area constraints do not intersect", res)
    nrm = float(np.linalg.norm(x_min))
    mu = DEFAULT_MU_FACTOR * nrm if spec.energy_mu is None else spec.energy_mu
    if mu < nrm * (1 - 1e-12):
        raise PulseInfeasible(f"energy bound mu={mu} is below the minimum feasible norm {nrm}",
                              nrm - mu)
    eps = spec.epsilon
    if eps is None:
        eps = DEFAULT_EPSILON_RATIO * mask_excess_sum(x_min, spec, sets)
    return replace(spec, energy_mu=mu, epsilon=eps), x_min, res


def design_pulse(spec: PulseSpec, config: SolverConfig = SolverConfig(max_iters=20000, stop_rel=1e-8),
                 include_c1=True, x0=None, num_threads=1):
    """Solve the pulse design problem; returns ``(x, report)``."""
    sets = build_index_sets(spec)
    spec, x_min, pre_res = resolve_defaults(spec, sets)
    N = spec.N
    shape = _shape_projector(spec, sets)

    dft_null = make_unitary_dft(N, sets.D2)
    extra = [
        (dft_null, np.zeros_like, "C2"),
        (identity(N), lambda u: project_l2_ball(spec.energy_mu, u), "C3"),
    ]
    split = []
    if include_c1 and sets.D1.size:
        tau = spec.c1_scale if spec.c1_scale is not None else max(1.0, C1_BUDGET_SCALE / spec.epsilon)
        kind = DistanceToSet(tau, spec.beta, Ball2(np.zeros(2), spec.mask_limit))
        c1 = DecomposableConstraint(BlockLayout.contiguous(np.full(sets.D1.size, 2)), kind,
                                    tau * spec.epsilon)
        split.append(SplitConstraint(make_unitary_dft(N, sets.D1), c1, "C1"))

    start = x_min if x0 is None else np.asarray(x0, dtype=float)
    prob = build_split_problem(N, lambda x: 2.0 * x, 2.0, lambda x: float(x @ x), shape, start,
                               split=split, extra=extra, num_threads=num_threads)
    w, trace = solve(prob, config)
    x = w[:N]

    c = spec.center
    dsum = mask_excess_sum(x, spec, sets)
    residuals = {
        "C1": max(dsum - spec.epsilon, 0.0) if include_c1 else 0.0,
        "C2": float(np.linalg.norm(dft_null.apply(x))),
        "C3": max(float(np.linalg.norm(x)) - spec.energy_mu, 0.0),
        "C4": float(max(abs(x[c] - 1.0), np.max(np.abs(x[c - np.arange(1, c)] - x[c + np.arange(1, c)])))),
        "C5": float(np.max(np.abs(x[sets.D3]))) if sets.D3.size else 0.0,
    }
    scale = {"C1": spec.epsilon, "C3": spec.energy_mu}
    feasible = all(v <= FEAS_TOL[k] * scale.get(k, 1.0) for k, v in residuals.items())
    report = PulseReport(
        objective=float(x @ x),
        norm=float(np.linalg.norm(x)),
        mu=float(spec.energy_mu),
        epsilon=float(spec.epsilon),
        beta=float(spec.beta),
        mask_excess_sum=dsum,
        c1_active=bool(include_c1 and dsum >= spec.epsilon * (1 - INACTIVE_MARGIN)),
        residuals=residuals,
        iters=trace.iterations,
        converged=trace.converged,
        preflight_residual=pre_res,
        feasible=bool(feasible),
    )
    return x, report


def spectrum_report(x, spec: PulseSpec, sets=None):
    """Rows ``(bin, hz, magnitude, mask_excess)`` over all ``N`` bins.

    Bins above ``N/2`` carry negative frequencies.
    """
    sets = build_index_sets(spec) if sets is None else sets
    N = spec.N
    mag = np.abs(np.fft.fft(np.asarray(x, dtype=float))) / math.sqrt(N)
    k = np.arange(N)
    hz = np.where(k <= N // 2, k, k - N) * (spec.fs / N)
    excess = np.zeros(N)
    excess[sets.D1] = np.maximum(mag[sets.D1] - spec.mask_limit, 0.0)
    return [(int(k[i]), float(hz[i]), float(mag[i]), float(excess[i])) for i in range(N)]
