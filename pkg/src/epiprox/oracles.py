"""Slow reference solutions used to validate the closed forms.

Nothing here shares code with the fast paths. Epigraph projections reduce
to a one-dimensional convex search over the height ``theta``: for a fixed
height the best point is the projection of ``y`` onto the level set
``{h <= theta}``, which is elementary for every supported kind.
"""
import numpy as np
from scipy.optimize import brentq, minimize_scalar


def _level_ball(y, r):
    n = np.linalg.norm(y)
    return y.copy() if n <= r else y * (r / n)


def _level_projector(kind, y):
    """Return ``theta -> P_{lev_theta h}(y)`` and ``h(y)``."""
    name = type(kind).__name__
    y = np.asarray(y, dtype=float)
    if name == "EuclideanNorm":
        return (lambda th: _level_ball(y, th / kind.tau)), kind.tau * np.linalg.norm(y)
    if name == "WeightedInfNorm":
        t = np.asarray(kind.taus, float)
        return (lambda th: np.clip(y, -t * th, t * th)), float(np.max(np.abs(y) / t))
    if name == "ScalarPower":
        return ((lambda th: np.clip(y, -(th / kind.tau) ** (1 / kind.beta), (th / kind.tau) ** (1 / kind.beta))),
                kind.tau * float(np.abs(y).max()) ** kind.beta)
    if name == "DistanceToSet":
        c = reference_set_projection(kind.set, y)
        d = np.linalg.norm(y - c)

        def proj(th):
            r = (th / kind.tau) ** (1 / kind.beta)
            return y.copy() if d <= r else c + (y - c) * (r / d)

        return proj, kind.tau * d ** kind.beta
    raise TypeError(f"no oracle for {name}")


def reference_set_projection(s, y):
    name = type(s).__name__
    if name == "Point":
        return np.broadcast_to(np.asarray(s.c, float), y.shape).copy()
    if name == "Ball2":
        c = np.broadcast_to(np.asarray(s.center, float), y.shape)
        return c + _level_ball(y - c, s.radius)
    if name == "BoxSet":
        return np.minimum(np.maximum(y, s.lo), s.hi)
    raise TypeError(f"no oracle for set {name}")


def epigraph_projection(kind, y, zeta, xatol=1e-13):
    """Minimize ``(theta - zeta)**2 + dist(y, lev_theta h)**2`` over theta."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    proj, hy = _level_projector(kind, y)
    lo = max(zeta, 0.0)
    hi = max(hy, zeta, 0.0)
    if hi <= lo:
        return proj(lo), lo

    def f(th):
        p = proj(th)
        return float(np.sum((p - y) ** 2) + (th - zeta) ** 2)

    r = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                        options={"xatol": xatol * max(1.0, hi), "maxiter": 2000})
    th = r.x
    # the bounded search never evaluates the end points exactly
    for cand in (lo, hi):
        if f(cand) < f(th):
            th = cand
    return proj(th), float(th)


def l12_ball(offsets, eta, y):
    """Block soft thresholding with the level found by Brent's method."""
    y = np.asarray(y, dtype=float)
    blocks = [y[a:b] for a, b in zip(offsets[:-1], offsets[1:])]
    norms = np.array([np.linalg.norm(b) for b in blocks])
    if norms.sum() <= eta:
        return y.copy()

    def g(lam):
        return np.sum(np.maximum(norms - lam, 0.0)) - eta

    lam = brentq(g, 0.0, norms.max(), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    out = [b * max(1.0 - lam / n, 0.0) if n > 0 else b * 0 for b, n in zip(blocks, norms)]
    return np.concatenate(out)


def _l1_ball_bisect(a, radius):
    """Projection of a nonnegative vector onto the l1 ball, by bisection."""
    if a.sum() <= radius:
        return a.copy()
    lam = brentq(lambda t: np.sum(np.maximum(a - t, 0.0)) - radius, 0.0, a.max(),
                 xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.maximum(a - lam, 0.0)


def l1inf_ball(offsets, eta, y):
    """Moreau decomposition per block and Brent's method on the multiplier."""
    y = np.asarray(y, dtype=float)
    blocks = [y[a:b] for a, b in zip(offsets[:-1], offsets[1:])]
    if sum(np.abs(b).max() for b in blocks) <= eta:
        return y.copy()

    def prox(lam):
        return [np.sign(b) * (np.abs(b) - _l1_ball_bisect(np.abs(b), lam)) for b in blocks]

    def g(lam):
        return sum(np.abs(p).max() for p in prox(lam)) - eta

    total = float(np.sum(np.abs(y)))
    lam = brentq(g, 0.0, total, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return np.concatenate(prox(lam))


def scalar_prox_bruteforce(tau, beta, zeta, y, grid=20001):
    """Grid search plus bounded refinement of the scalar prox objective."""
    def f(u):
        return 0.5 * (u - y) ** 2 + 0.5 * max(tau * abs(u) ** beta - zeta, 0.0) ** 2

    lo, hi = -abs(y) - 1.0, abs(y) + 1.0
    us = np.linspace(lo, hi, grid)
    vals = 0.5 * (us - y) ** 2 + 0.5 * np.maximum(tau * np.abs(us) ** beta - zeta, 0.0) ** 2
    i = int(np.argmin(vals))
    a, b = us[max(i - 1, 0)], us[min(i + 1, grid - 1)]
    r = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-14})
    return float(r.x)
