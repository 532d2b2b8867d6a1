"""Monotone + Lipschitz forward-backward-forward primal-dual solver.

Solves

    minimize  f(w)   subject to  w in P  and  L_k w in C_k  for every k,

where ``f`` has a Lipschitz gradient, ``P`` has an exact projector applied
to the primal iterate directly, and each ``C_k`` is reached through its own
linear operator ``L_k`` and a dual variable. Projections onto ``C_k`` enter
through the Moreau identity, so only projectors are ever needed.

:func:`build_split_problem` assembles the epigraphically split form of a
problem with decomposable level-set constraints on ``F_j x``: the primal
becomes ``w = (x, zeta_1, ..., zeta_J)``, the budgets ``sum(zeta_j) <= eta_j``
join the primal set, and each ``(Lambda_j F_j x, zeta_j)`` is dualized onto
its epigraph product.
"""
import csv
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .constraints import DecomposableConstraint, init_zeta
from .epigraph import EpiStackProjector
from .operators import LinOp
from .prox import HalfSpace, project_halfspace


class SolverDivergence(RuntimeError):
    def __init__(self, iteration, what="iterate"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SmoothTerm:
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    value: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be nonnegative")


@dataclass(frozen=True)
class DualTerm:
    op: LinOp
    project: Callable[[np.ndarray], np.ndarray]
    name: str = "constraint"


@dataclass(frozen=True)
class SolverProblem:
    """Problem data.

    ``primal_dim`` is the length of the leading block of ``w`` holding the
    original variable (the image or pulse, not the auxiliary epigraph
    heights). The stopping test uses the relative change of the whole
    primal-dual state.
    """

    smooth: SmoothTerm
    primal_set: Callable[[np.ndarray], np.ndarray]
    dual_terms: List[DualTerm]
    dim: int
    x0: np.ndarray
    primal_dim: Optional[int] = None

    def __post_init__(self):
        for t in self.dual_terms:
            if t.op.in_dim != self.dim:
                raise ValueError(f"dual term {t.name!r} acts on R^{t.op.in_dim}, primal is R^{self.dim}")
        if np.size(self.x0) != self.dim:
            raise ValueError("x0 has the wrong length")

    @property
    def n_x(self):
        return self.dim if self.primal_dim is None else self.primal_dim


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    stop_rel: float = 1e-4
    gamma_fraction: float = 0.9
    epsilon_margin: float = 1e-6
    seed: int = 0
    trace_every: int = 1

    def __post_init__(self):
        if not 0 < self.gamma_fraction < 1:
            raise ValueError("gamma_fraction must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.epsilon_margin < 0.5:
            raise ValueError("epsilon_margin must lie in [0, 0.5)")


@dataclass
class SolverTrace:
    iters: List[int] = field(default_factory=list)
    wall_time_s: List[float] = field(default_factory=list)
    rel_change: List[float] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    violations: List[np.ndarray] = field(default_factory=list)
    term_names: List[str] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    step_gamma: float = 0.0

    def to_csv(self, path, include_time=True):
        k = len(self.term_names)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "time_s", "rel_change", "objective"]
                       + [f"violation_{i + 1}" for i in range(k)])
            for j, it in enumerate(self.iters):
                t = repr(self.wall_time_s[j]) if include_time else ""
                w.writerow([it, t, repr(self.rel_change[j]), repr(self.objective[j])]
                           + [repr(float(v)) for v in self.violations[j]])


def step_constant(problem: SolverProblem):
    """``lipschitz + max(||[L_1; ...; L_K]||, 1)`` from the norm bounds."""
    nb = float(np.sqrt(sum(t.op.norm_bound ** 2 for t in problem.dual_terms)))
    return problem.smooth.lipschitz + max(nb, 1.0)


def step_gamma(problem, config: SolverConfig):
    return config.gamma_fraction * (1.0 - config.epsilon_margin) / step_constant(problem)


def objective_and_violations(problem: SolverProblem, w):
    """Smooth objective and ``||L_k w - P_k(L_k w)||`` for every dual term."""
    w = np.asarray(w, dtype=float)
    obj = float(problem.smooth.value(w)) if problem.smooth.value is not None else float("nan")
    viol = np.empty(len(problem.dual_terms))
    for k, t in enumerate(problem.dual_terms):
        u = t.op.apply(w)
        viol[k] = np.linalg.norm(u - t.project(u))
    return obj, viol


def solve(problem: SolverProblem, config: SolverConfig = SolverConfig()):
    """Run the iteration; returns ``(w, trace)``.

    The returned point is the primal-set projection computed in the final
    iteration, so it satisfies the primal-direct constraints exactly.
    """
    gamma = step_gamma(problem, config)
    terms = problem.dual_terms
    grad = problem.smooth.gradient
    trace = SolverTrace(term_names=[t.name for t in terms], step_gamma=gamma)

    w = problem.primal_set(np.array(problem.x0, dtype=float))
    v = [np.zeros(t.op.out_dim) for t in terms]
    t0 = time.perf_counter()
    p = w
    for it in range(1, config.max_iters + 1):
        lt_v = grad(w)
        for t, vk in zip(terms, v):
            lt_v = lt_v + t.op.adjoint(vk)
        xh = w - gamma * lt_v
        p = problem.primal_set(xh)

        dp = p - w
        v_old = list(v)
        lt_a = grad(p)
        for k, t in enumerate(terms):
            vh = v[k] + gamma * t.op.apply(w)
            a = vh - gamma * t.project(vh / gamma)
            lt_a = lt_a + t.op.adjoint(a)
            v[k] = a + gamma * t.op.apply(dp)
        xt = p - gamma * lt_a
        w_new = w - xh + xt

        if not np.all(np.isfinite(w_new)):
            raise SolverDivergence(it)
        # change of the whole primal-dual state: the primal part alone can sit
        # still on a face of the primal set while the multipliers keep moving
        d2 = float(np.sum((w_new - w) ** 2)) + sum(float(np.sum((a - b) ** 2)) for a, b in zip(v, v_old))
        n2 = float(w @ w) + sum(float(b @ b) for b in v_old)
        rel = np.sqrt(d2 / n2) if n2 > 0 else np.sqrt(d2)
        w = w_new

        done = rel <= config.stop_rel
        if it % config.trace_every == 0 or done or it == config.max_iters:
            obj, viol = objective_and_violations(problem, p)
            trace.iters.append(it)
            trace.wall_time_s.append(time.perf_counter() - t0)
            trace.rel_change.append(float(rel))
            trace.objective.append(obj)
            trace.violations.append(viol)
        trace.iterations = it
        if done:
            trace.converged = True
            break
    return p, trace


# ---------------------------------------------------------------------------
# epigraphical assembly

def _lift_epi_op(LF: LinOp, dim, n_x, z0, z1):
    """``w -> (Lambda F w[:n_x], w[z0:z1])``."""
    m = LF.out_dim

    def fwd(w):
        return np.concatenate([LF.apply(w[:n_x]), w[z0:z1]])

    def adj(u):
        out = np.zeros(dim)
        out[:n_x] = LF.adjoint(u[:m])
        out[z0:z1] = u[m:]
        return out

    return LinOp(dim, m + (z1 - z0), fwd, adj, max(LF.norm_bound, 1.0), "epi")


def _lift_x_op(H: LinOp, dim, n_x):
    def adj(u):
        out = np.zeros(dim)
        out[:n_x] = H.adjoint(u)
        return out

    return LinOp(dim, H.out_dim, lambda w: H.apply(w[:n_x]), adj, H.norm_bound, H.name)


@dataclass(frozen=True)
class SplitConstraint:
    """A decomposable constraint on ``F x``.

    ``lifted_op`` may supply ``Lambda F`` directly (e.g. a fused
    implementation); ``lifted_norm`` overrides its norm bound when a tighter
    estimate is known.
    """

    F: LinOp
    constraint: DecomposableConstraint
    name: str = "epi"
    lifted_norm: Optional[float] = None
    lifted_op: Optional[LinOp] = None


def build_split_problem(n_x, grad_x, lipschitz, value_x, x_projector, x0,
                        split=(), extra=(), num_threads=1):
    """Assemble the augmented problem over ``w = (x, zeta_1, ..., zeta_J)``.

    Parameters
    ----------
    n_x : int
    grad_x, value_x : callables on ``x``
        Gradient and value of the smooth term.
    lipschitz : float
    x_projector : callable
        Exact projector for the primal-direct constraints on ``x``.
    x0 : array
        Starting ``x``; each ``zeta_j`` starts at ``init_zeta``.
    split : sequence of SplitConstraint
    extra : sequence of ``(H, project, name)``
        Additional dualized constraints ``H x in C``.
    """
    split = list(split)
    dims = [n_x]
    for s in split:
        dims.append(dims[-1] + s.constraint.L)
    dim = dims[-1]
    spans = list(zip(dims[:-1], dims[1:]))
    halfspaces = [HalfSpace(s.constraint.L, s.constraint.eta, s.constraint.equality) for s in split]

    def primal_set(w):
        out = np.empty_like(w)
        out[:n_x] = x_projector(w[:n_x])
        for hs, (a, b) in zip(halfspaces, spans):
            out[a:b] = project_halfspace(hs, w[a:b])
        return out

    def grad(w):
        g = np.zeros_like(w)
        g[:n_x] = grad_x(w[:n_x])
        return g

    terms = []
    for s, (a, b) in zip(split, spans):
        c = s.constraint
        if s.lifted_op is not None:
            LF = s.lifted_op
        else:
            lam = c.lifting()
            if c.layout.is_identity:
                lam = lam.with_norm_bound(1.0)
            LF = lam @ s.F
        op = _lift_epi_op(LF, dim, n_x, a, b)
        if s.lifted_norm is not None:
            op = op.with_norm_bound(max(s.lifted_norm, 1.0))
        stack = EpiStackProjector(c.layout.offsets, list(c.kinds), num_threads=num_threads)
        m = c.layout.dim

        def project(u, stack=stack, m=m):
            p, th = stack(u[:m], u[m:])
            return np.concatenate([p, th])

        terms.append(DualTerm(op, project, s.name))
    for H, proj, name in extra:
        terms.append(DualTerm(_lift_x_op(H, dim, n_x), proj, name))

    x0 = np.asarray(x0, dtype=float)
    w0 = np.empty(dim)
    w0[:n_x] = x_projector(x0)
    for s, (a, b) in zip(split, spans):
        w0[a:b] = init_zeta(s.constraint, s.F.apply(w0[:n_x]))

    smooth = SmoothTerm(grad, lipschitz, lambda w: value_x(w[:n_x]))
    return SolverProblem(smooth, primal_set, terms, dim, w0, primal_dim=n_x)
