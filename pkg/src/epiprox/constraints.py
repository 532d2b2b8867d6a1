"""Epigraphical splitting of decomposable level-set constraints.

A constraint ``sum_l h_l(y_l) <= eta`` is replaced by the pair of sets

* ``E``: every ``(y_l, zeta_l)`` lies in the epigraph of ``h_l``,
* ``V``: ``sum(zeta) <= eta`` (or ``== eta`` with ``equality=True``),

both of which have cheap exact projections.

Blocks are described by a :class:`BlockLayout`, which lifts a source
vector ``u`` into ``Lambda u``: block ``l`` gathers ``weights * u[indices]``
over its own contiguous slice. Overlapping blocks in source space are
therefore disjoint after lifting.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import epigraph as epi
from .operators import make_block_weighting
from .prox import HalfSpace, project_halfspace


@dataclass(frozen=True, eq=False)
class BlockLayout:
    """Gather pattern from a source vector into ``L`` contiguous blocks.

    Parameters
    ----------
    indices : int array of length M
        Source index of every lifted entry, block after block.
    offsets : int array of length L+1
        Block ``l`` occupies lifted entries ``offsets[l]:offsets[l+1]``.
    weights : float array of length M
        Strictly positive per-entry weights.
    source_dim : int
        Length of the source vector.
    """

    indices: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    source_dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        off = np.asarray(self.offsets, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "weights", w)
        if off.size < 2 or off[0] != 0:
            raise ValueError("offsets must start at 0 and describe at least one block")
        if np.any(np.diff(off) < 1):
            raise ValueError("every block needs at least one entry")
        if off[-1] != idx.size or w.size != idx.size:
            raise ValueError("indices, weights and offsets disagree on the lifted size")
        if np.any(w <= 0):
            raise ValueError("block weights must be strictly positive")
        if idx.min() < 0 or idx.max() >= self.source_dim:
            raise ValueError("block index out of range")

    @property
    def L(self):
        return self.offsets.size - 1

    @property
    def dim(self):
        return int(self.offsets[-1])

    @property
    def sizes(self):
        return np.diff(self.offsets)

    @property
    def is_identity(self):
        return (self.source_dim == self.dim
                and np.array_equal(self.indices, np.arange(self.dim))
                and np.all(self.weights == 1.0))

    def blocks(self):
        return [self.indices[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    @classmethod
    def contiguous(cls, sizes):
        """Identity gather: the source vector is already split into blocks."""
        sizes = np.asarray(sizes, dtype=np.int64)
        off = np.concatenate([[0], np.cumsum(sizes)])
        n = int(off[-1])
        return cls(np.arange(n), off, np.ones(n), n)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], source_dim, weights=None):
        sizes = [len(b) for b in blocks]
        idx = np.concatenate([np.asarray(b, dtype=np.int64) for b in blocks])
        w = np.ones(idx.size) if weights is None else np.concatenate(
            [np.asarray(b, dtype=float) for b in weights])
        return cls(idx, np.concatenate([[0], np.cumsum(sizes)]), w, source_dim)

    def lift(self, u):
        return self.weights * np.asarray(u)[self.indices]


@dataclass(frozen=True, eq=False)
class DecomposableConstraint:
    """``sum_l h_l((Lambda u)_l) <= eta`` over the blocks of ``layout``."""

    layout: BlockLayout
    kinds: tuple
    eta: float
    equality: bool = False

    def __post_init__(self):
        kinds = self.kinds
        if not isinstance(kinds, (list, tuple)):
            kinds = [kinds] * self.layout.L
        object.__setattr__(self, "kinds", tuple(kinds))
        if len(self.kinds) != self.layout.L:
            raise ValueError(f"{len(self.kinds)} kinds for {self.layout.L} blocks")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative for the set to be nonempty")
        # validates block sizes against kinds
        object.__setattr__(self, "_stack", epi.EpiStackProjector(self.layout.offsets, list(self.kinds)))

    @property
    def L(self):
        return self.layout.L

    @property
    def stack(self):
        return self._stack

    def lifting(self):
        """The gather operator ``Lambda`` as a LinOp."""
        return make_block_weighting(self.layout)

    def block_values(self, u):
        return self._stack.values(self.layout.lift(u))

    def value(self, u):
        return float(np.sum(self.block_values(u)))

    def with_eta(self, eta):
        return DecomposableConstraint(self.layout, self.kinds, float(eta), self.equality)


@dataclass
class EpiState:
    y: np.ndarray
    zeta: np.ndarray


def split(c: DecomposableConstraint):
    """Return the half-space on ``zeta`` and the projector onto the epigraph product."""
    hs = HalfSpace(c.L, c.eta, c.equality)
    stack = c.stack

    def epi_projector(state: EpiState) -> EpiState:
        p, theta = stack(state.y, state.zeta)
        return EpiState(p, theta)

    return hs, epi_projector


def init_zeta(c: DecomposableConstraint, u):
    """Block values of ``u``, shifted uniformly so the budget holds."""
    zeta = c.block_values(u)
    excess = (zeta.sum() - c.eta) / c.L
    if c.equality:
        return zeta - excess
    return zeta - max(0.0, excess)


def check_membership(c: DecomposableConstraint, u, tol=0.0):
    """Return ``(is_member, violation)`` with ``violation = h(u) - eta``."""
    violation = c.value(u) - c.eta
    return violation <= tol, violation


def alternating_projections(c: DecomposableConstraint, state: EpiState, iters=10_000, tol=0.0):
    """Alternate between ``E`` and ``V x R^M`` starting from ``state``.

    Stops early once a sweep moves the point by at most ``tol``.
    """
    hs, proj_e = split(c)
    y, zeta = np.array(state.y, dtype=float), np.array(state.zeta, dtype=float)
    for _ in range(iters):
        s = proj_e(EpiState(y, zeta))
        z2 = project_halfspace(hs, s.zeta)
        move = np.sqrt(np.sum((s.y - y) ** 2) + np.sum((z2 - zeta) ** 2))
        y, zeta = s.y, z2
        if move <= tol:
            break
    return EpiState(y, zeta)


# ---------------------------------------------------------------------------
# JSON round trip for contiguous layouts with simple kinds

def _kind_to_dict(k):
    if isinstance(k, epi.EuclideanNorm):
        return {"kind": "l2", "tau": k.tau}
    if isinstance(k, epi.WeightedInfNorm):
        return {"kind": "linf", "taus": k.taus.tolist()}
    if isinstance(k, epi.ScalarPower):
        return {"kind": "power", "tau": k.tau, "beta": k.beta}
    if isinstance(k, epi.DistanceToSet):
        s = k.set
        if isinstance(s, epi.Point):
            sd = {"set": "point", "c": np.asarray(s.c, float).tolist()}
        elif isinstance(s, epi.Ball2):
            sd = {"set": "ball2", "center": np.asarray(s.center, float).tolist(), "radius": s.radius}
        elif isinstance(s, epi.BoxSet):
            sd = {"set": "box", "lo": np.asarray(s.lo, float).tolist(), "hi": np.asarray(s.hi, float).tolist()}
        else:
            raise TypeError("subspace sets are not serializable")
        return {"kind": "dist", "tau": k.tau, "beta": k.beta, **sd}
    raise TypeError(f"cannot serialize {k!r}")


def _kind_from_dict(d):
    kind = d["kind"]
    if kind == "l2":
        return epi.EuclideanNorm(d["tau"])
    if kind == "linf":
        return epi.WeightedInfNorm(np.asarray(d["taus"], float))
    if kind == "power":
        return epi.ScalarPower(d["tau"], d["beta"])
    if kind == "dist":
        s = d["set"]
        if s == "point":
            cset = epi.Point(np.asarray(d["c"], float))
        elif s == "ball2":
            cset = epi.Ball2(np.asarray(d["center"], float), d["radius"])
        elif s == "box":
            cset = epi.BoxSet(np.asarray(d["lo"], float), np.asarray(d["hi"], float))
        else:
            raise ValueError(f"unknown set {s!r}")
        return epi.DistanceToSet(d["tau"], d["beta"], cset)
    raise ValueError(f"unknown kind {kind!r}")


def constraint_to_dict(c: DecomposableConstraint):
    lay = c.layout
    return {
        "eta": c.eta,
        "equality": c.equality,
        "source_dim": lay.source_dim,
        "indices": lay.indices.tolist(),
        "offsets": lay.offsets.tolist(),
        "weights": lay.weights.tolist(),
        "kinds": [_kind_to_dict(k) for k in c.kinds],
    }


def constraint_from_dict(d):
    lay = BlockLayout(np.asarray(d["indices"]), np.asarray(d["offsets"]),
                      np.asarray(d["weights"], float), int(d["source_dim"]))
    return DecomposableConstraint(lay, tuple(_kind_from_dict(k) for k in d["kinds"]),
                                  float(d["eta"]), bool(d.get("equality", False)))
