"""Scalar proximity operators and projections onto simple sets."""
from dataclasses import dataclass

import numpy as np

from ._backend import kernels


@dataclass(frozen=True)
class PowerProxParams:
    """Parameters of ``phi(y) = tau*|y|**beta`` shifted by the height ``zeta``."""

    tau: float
    beta: float
    zeta: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class Box:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("box needs lo <= hi")


@dataclass(frozen=True)
class HalfSpace:
    """``{z in R^dim : sum(z) <= eta}``, or the hyperplane when ``equality``."""

    dim: int
    eta: float
    equality: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("half-space dimension must be >= 1")


def prox_power_max_sq(params, y):
    """Prox of ``0.5*max(tau*|.|**beta - zeta, 0)**2`` at ``y``.

    For ``beta > 1`` the magnitude is the unique root of
    ``beta*tau*chi**(beta-1)*(tau*chi**beta - zeta) + chi = |y|`` on the
    admissible bracket, found by safeguarded Newton. ``y`` may be a scalar
    or an array; the result has the same shape.
    """
    arr = np.asarray(y, dtype=float)
    out = kernels.prox_power_max_sq(np.atleast_1d(arr), params.tau, params.beta, params.zeta)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def power_root_residual(params, y, p):
    """Residual of the root equation at ``|p|`` (zero when the prox is exact).

    On the two branches not described by the root (``y`` already below the
    height, and the ``beta == 1`` clamp at zero) the residual measures the
    distance to the value the branch prescribes instead.
    """
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    chi = np.abs(p)
    t, b, z = params.tau, params.beta, params.zeta
    a = np.abs(y)
    root = np.abs(b * t * chi ** (b - 1) * (t * chi ** b - z) + chi - a)
    keep = (z > 0) & (t * a ** b <= z)
    clamp = (b == 1.0) & (a + t * z <= 0) & ~keep
    return np.where(keep, np.abs(p - y), np.where(clamp, chi, root))


def project_box(box, x):
    return np.clip(x, box.lo, box.hi)


def project_halfspace(hs, z):
    z = np.asarray(z, dtype=float)
    excess = z.sum() - hs.eta
    if excess <= 0 and not hs.equality:
        return z.copy()
    return z - excess / hs.dim


def project_l2_ball(radius, x):
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm <= radius:
        return x.copy()
    return x * (radius / nrm)


def l1_threshold(a_sorted, radius):
    """Soft threshold ``lam`` with ``sum(max(a - lam, 0)) == radius``.

    ``a_sorted`` holds magnitudes in decreasing order and must have
    ``sum(a_sorted) > radius``.
    """
    cs = np.cumsum(a_sorted)
    k = np.arange(1, a_sorted.size + 1)
    cand = (cs - radius) / k
    rho = np.flatnonzero(a_sorted > cand)[-1]
    return max(cand[rho], 0.0)


def project_l1_ball(radius, x):
    """Euclidean projection onto ``{u : sum|u_i| <= radius}`` by sorting."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    if a.sum() <= radius:
        return x.copy()
    if radius <= 0:
        return np.zeros_like(x)
    lam = l1_threshold(np.sort(a)[::-1], radius)
    return np.sign(x) * np.maximum(a - lam, 0.0)
