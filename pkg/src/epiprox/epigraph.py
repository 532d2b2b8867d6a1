"""Closed-form projections onto epigraphs of block functions.

Each projection maps ``(y, zeta)`` to the nearest ``(p, theta)`` with
``h(p) <= theta``. Supported block functions:

* ``EuclideanNorm``   ``tau * ||y||``
* ``WeightedInfNorm`` ``max_m |y_m| / tau_m``
* ``DistanceToSet``   ``tau * d_C(y) ** beta`` for a simple convex set ``C``
* ``ScalarPower``     ``tau * |y| ** beta`` on scalar blocks

Single-block functions and :class:`EpiStackProjector` share the same batch
code, so stacking blocks never changes a block's result.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .operators import LinOp


# ---------------------------------------------------------------------------
# simple sets

def _ball_rows(Y, C, R):
    diff = Y - C
    nrm = np.sqrt(np.sum(diff * diff, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > R, R / nrm, 1.0)
    return C + scale[:, None] * diff


@dataclass(frozen=True, eq=False)
class Point:
    c: np.ndarray

    def project(self, y):
        return np.broadcast_to(np.asarray(self.c, dtype=float), np.shape(y)).copy()


@dataclass(frozen=True, eq=False)
class Ball2:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")

    def project(self, y):
        y = np.asarray(y, dtype=float)
        c = np.broadcast_to(np.asarray(self.center, dtype=float), y.shape)
        return _ball_rows(y[None], c[None], np.array([self.radius]))[0]


@dataclass(frozen=True, eq=False)
class BoxSet:
    lo: np.ndarray
    hi: np.ndarray

    def project(self, y):
        return np.clip(y, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class Subspace:
    """Range of an orthogonal projector given as a self-adjoint idempotent LinOp."""

    projector: LinOp

    def project(self, y):
        return self.projector.apply(np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# block functions

@dataclass(frozen=True)
class EuclideanNorm:
    tau: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def value(self, y):
        return self.tau * float(np.sqrt(np.sum(np.square(y))))

    def project(self, y, zeta):
        return project_epi_l2(self.tau, y, zeta)


@dataclass(frozen=True, eq=False)
class WeightedInfNorm:
    taus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        if np.any(self.taus <= 0):
            raise ValueError("all taus must be positive")

    def value(self, y):
        return float(np.max(np.abs(y) / self.taus))

    def project(self, y, zeta):
        return project_epi_linf(self.taus, y, zeta)


@dataclass(frozen=True, eq=False)
class DistanceToSet:
    tau: float
    beta: float
    set: object = field(default=None)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.beta >= 1:
            raise ValueError("beta must be >= 1")

    def value(self, y):
        y = np.asarray(y, dtype=float)
        d = np.linalg.norm(y - self.set.project(y))
        return self.tau * float(d) ** self.beta

    def project(self, y, zeta):
        return project_epi_dist(self.tau, self.beta, self.set, y, zeta)


@dataclass(frozen=True)
class ScalarPower:
    tau: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.beta >= 1:
            raise ValueError("beta must be >= 1")

    def value(self, y):
        return self.tau * float(np.abs(np.asarray(y, dtype=float).reshape(-1)[0])) ** self.beta

    def project(self, y, zeta):
        from .prox import PowerProxParams
        p, th = project_epi_generic_scalar(PowerProxParams(self.tau, self.beta), float(np.reshape(y, -1)[0]), zeta)
        return np.array([p]), th


# ---------------------------------------------------------------------------
# batch cores (rows are blocks)

def _dist_rows(Y, P, tau, beta, zeta):
    diff = Y - P
    d = np.sqrt(np.sum(diff * diff, axis=1))
    chi = kernels.prox_power_max_sq(d, tau, beta, zeta)
    inside = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(inside, 1.0, chi / d)
    out = alpha[:, None] * Y + (1.0 - alpha)[:, None] * P
    out[inside] = Y[inside]
    theta = np.maximum(tau * (alpha * d) ** beta, zeta)
    return out, theta


def _power_rows(y, tau, beta, zeta):
    p = kernels.prox_power_max_sq(y, tau, beta, zeta)
    theta = np.maximum(tau * np.abs(p) ** beta, zeta)
    return p, theta


# ---------------------------------------------------------------------------
# single-block projections

def project_epi_l2(tau, y, zeta):
    """Projection onto the epigraph of ``tau*||.||`` (a scaled Lorentz cone)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    p, th = kernels.epi_l2_blocks(y, np.array([0, y.size]), np.array([float(tau)]),
                                  np.array([float(zeta)]))
    return p, float(th[0])


def project_epi_linf(taus, y, zeta):
    """Projection onto the epigraph of ``max_m |y_m|/tau_m``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    taus = np.broadcast_to(np.asarray(taus, dtype=float), y.shape)
    p, th = kernels.epi_linf_blocks(y, np.array([0, y.size]), np.ascontiguousarray(taus),
                                    np.array([float(zeta)]))
    return p, float(th[0])


def linf_mbar_candidates(taus, y, zeta):
    """All split indices (1-based) satisfying the ordering condition.

    Evaluates, for every candidate ``k`` in ``1..M+1``, whether
    ``nu[k-1] < c(k) <= nu[k]`` with ``c(k)`` the ratio of suffix sums over
    the ascending order of ``nu = |y|/tau``. Exactly one candidate should
    pass; used to cross-check the scan inside the kernels.
    """
    y = np.asarray(y, dtype=float)
    taus = np.broadcast_to(np.asarray(taus, dtype=float), y.shape)
    nu = np.abs(y) / taus
    order = np.argsort(nu, kind="stable")
    nu = np.concatenate([[-np.inf], nu[order], [np.inf]])
    t2 = np.concatenate([[0.0], taus[order] ** 2, [0.0]])
    m = y.size
    hits = []
    for k in range(1, m + 2):
        num = zeta + np.sum(nu[k:m + 1] * t2[k:m + 1])
        den = 1.0 + np.sum(t2[k:m + 1])
        c = num / den
        if nu[k - 1] < c <= nu[k]:
            hits.append(k)
    return hits


def project_epi_dist(tau, beta, set, y, zeta):
    """Projection onto the epigraph of ``tau * d_C**beta``.

    The point moves along the segment between ``y`` and ``P_C(y)`` by the
    ratio of the scalar power prox of the distance to the distance itself.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    P = set.project(y)
    p, th = _dist_rows(y[None], np.asarray(P, dtype=float)[None], np.array([float(tau)]),
                       np.array([float(beta)]), np.array([float(zeta)]))
    return p[0], float(th[0])


def project_epi_generic_scalar(params, y, zeta):
    """Epigraph of ``tau*|.|**beta`` via the prox of ``0.5*max(phi - zeta, 0)**2``."""
    p, th = _power_rows(np.array([float(y)]), np.array([params.tau]),
                        np.array([params.beta]), np.array([float(zeta)]))
    return float(p[0]), float(th[0])


# ---------------------------------------------------------------------------
# stacks

def _ranges(offsets, ids):
    starts = offsets[ids]
    sizes = offsets[ids + 1] - starts
    sub = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    ent = np.repeat(starts - sub[:-1], sizes) + np.arange(sub[-1])
    return ent.astype(np.int64), sub


class EpiStackProjector:
    """Project a stack of ``(y_l, zeta_l)`` pairs onto their epigraphs.

    The block-to-kernel grouping is computed once; calling the object is
    cheap. Blocks are contiguous: block ``l`` owns ``y[offsets[l]:offsets[l+1]]``.

    Parameters
    ----------
    offsets : array of int, length L+1
    kinds : sequence of block functions, or a single one shared by all blocks
    num_threads : int
        Large kernel groups are split into this many chunks run on threads
        (the compiled kernels release the GIL).
    """

    def __init__(self, offsets, kinds, num_threads=1):
        self.offsets = np.asarray(offsets, dtype=np.int64)
        L = self.offsets.size - 1
        if L < 1:
            raise ValueError("need at least one block")
        if not isinstance(kinds, (list, tuple)):
            kinds = [kinds] * L
        if len(kinds) != L:
            raise ValueError(f"{len(kinds)} kinds for {L} blocks")
        self.kinds = list(kinds)
        self.dim = int(self.offsets[-1])
        self.num_blocks = L
        self.num_threads = max(1, int(num_threads))
        sizes = np.diff(self.offsets)
        self._groups = []
        self._build(sizes)

    def _build(self, sizes):
        buckets = {}
        for l, kind in enumerate(self.kinds):
            if isinstance(kind, EuclideanNorm):
                key = ("l2",)
            elif isinstance(kind, WeightedInfNorm):
                if kind.taus.size != sizes[l]:
                    raise ValueError(f"block {l}: {kind.taus.size} taus for size {sizes[l]}")
                key = ("linf",)
            elif isinstance(kind, ScalarPower):
                if sizes[l] != 1:
                    raise ValueError(f"block {l}: ScalarPower needs a scalar block")
                key = ("power",)
            elif isinstance(kind, DistanceToSet):
                s = kind.set
                if isinstance(s, (Point, Ball2, BoxSet)):
                    key = ("dist", type(s).__name__, int(sizes[l]))
                else:
                    key = ("dist-generic",)
            else:
                raise TypeError(f"unsupported block function {kind!r}")
            buckets.setdefault(key, []).append(l)

        for key, ids in buckets.items():
            ids = np.asarray(ids, dtype=np.int64)
            ent, sub = _ranges(self.offsets, ids)
            whole = ids.size == self.num_blocks
            g = {"key": key, "ids": ids, "ent": None if whole else ent, "sub": sub}
            kinds = [self.kinds[i] for i in ids]
            if key[0] == "l2":
                g["tau"] = np.array([k.tau for k in kinds])
            elif key[0] == "linf":
                g["taus"] = np.concatenate([k.taus for k in kinds])
            elif key[0] == "power":
                g["tau"] = np.array([k.tau for k in kinds])
                g["beta"] = np.array([k.beta for k in kinds])
            elif key[0] == "dist":
                m = key[2]
                g["tau"] = np.array([k.tau for k in kinds])
                g["beta"] = np.array([k.beta for k in kinds])
                if key[1] == "Point":
                    g["C"] = np.array([np.broadcast_to(np.asarray(k.set.c, float), (m,)) for k in kinds])
                elif key[1] == "Ball2":
                    g["C"] = np.array([np.broadcast_to(np.asarray(k.set.center, float), (m,)) for k in kinds])
                    g["R"] = np.array([float(k.set.radius) for k in kinds])
                else:
                    g["LO"] = np.array([np.broadcast_to(np.asarray(k.set.lo, float), (m,)) for k in kinds])
                    g["HI"] = np.array([np.broadcast_to(np.asarray(k.set.hi, float), (m,)) for k in kinds])
            self._groups.append(g)

    def _blocks_kernel(self, fn, y, sub, params, zeta):
        L = sub.size - 1
        nt = self.num_threads
        if nt == 1 or L < 4096:
            return fn(y, sub, params, zeta)
        cuts = np.linspace(0, L, nt + 1).astype(int)
        per_entry = params.size == y.size

        def run(i):
            a, b = cuts[i], cuts[i + 1]
            lo, hi = sub[a], sub[b]
            prm = params[lo:hi] if per_entry else params[a:b]
            return fn(y[lo:hi], sub[a:b + 1] - lo, prm, zeta[a:b])

        with ThreadPoolExecutor(nt) as pool:
            parts = list(pool.map(run, range(nt)))
        return (np.concatenate([p for p, _ in parts]),
                np.concatenate([t for _, t in parts]))

    def __call__(self, y, zeta):
        y = np.asarray(y, dtype=float)
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        if y.size != self.dim or zeta.size != self.num_blocks:
            raise ValueError(
                f"expected y of size {self.dim} and zeta of size {self.num_blocks}, "
                f"got {y.size} and {zeta.size}")
        p = np.empty_like(y)
        theta = np.empty_like(zeta)
        for g in self._groups:
            ids, ent, sub = g["ids"], g["ent"], g["sub"]
            ys = y if ent is None else y[ent]
            zs = zeta[ids]
            kind = g["key"][0]
            if kind == "l2":
                ps, ts = self._blocks_kernel(kernels.epi_l2_blocks, ys, sub, g["tau"], zs)
            elif kind == "linf":
                ps, ts = self._blocks_kernel(kernels.epi_linf_blocks, ys, sub, g["taus"], zs)
            elif kind == "power":
                ps, ts = _power_rows(ys, g["tau"], g["beta"], zs)
            elif kind == "dist":
                Y = ys.reshape(ids.size, -1)
                sname = g["key"][1]
                if sname == "Point":
                    P = g["C"]
                elif sname == "Ball2":
                    P = _ball_rows(Y, g["C"], g["R"])
                else:
                    P = np.clip(Y, g["LO"], g["HI"])
                ps, ts = _dist_rows(Y, P, g["tau"], g["beta"], zs)
                ps = ps.ravel()
            else:
                ps = np.empty_like(ys)
                ts = np.empty(ids.size)
                for j, l in enumerate(ids):
                    a, b = sub[j], sub[j + 1]
                    ps[a:b], ts[j] = self.kinds[l].project(ys[a:b], zs[j])
            if ent is None:
                p[:] = ps
            else:
                p[ent] = ps
            theta[ids] = ts
        return p, theta

    def values(self, y):
        """Per-block function values ``h_l(y_l)``."""
        y = np.asarray(y, dtype=float)
        out = np.empty(self.num_blocks)
        for g in self._groups:
            ids, ent, sub = g["ids"], g["ent"], g["sub"]
            ys = y if ent is None else y[ent]
            kind = g["key"][0]
            if kind == "l2":
                out[ids] = g["tau"] * kernels.block_l2_norms(ys, sub)
            elif kind == "linf":
                out[ids] = kernels.block_linf_norms(ys / g["taus"], sub)
            elif kind == "power":
                out[ids] = g["tau"] * np.abs(ys) ** g["beta"]
            else:
                for j, l in enumerate(ids):
                    out[l] = self.kinds[l].value(ys[sub[j]:sub[j + 1]])
        return out


def project_epi_stack(layout, kinds, y, zeta):
    """Blockwise epigraph projection over the contiguous blocks of ``layout``."""
    return EpiStackProjector(layout.offsets, kinds)(y, zeta)
