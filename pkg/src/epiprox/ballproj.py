"""Direct Euclidean projections onto mixed-norm balls.

These are the baselines for the epigraphical split: the whole constraint
``sum_l ||y_l||_p <= eta`` is projected onto in one (possibly iterative) step.
"""
import numpy as np

from ._backend import kernels
from .prox import project_l1_ball


def _offsets(layout):
    return np.asarray(getattr(layout, "offsets", layout), dtype=np.int64)


def project_l12_ball(layout, eta, y):
    """Projection onto ``{y : sum_l ||y_l||_2 <= eta}``.

    The vector of block norms is projected onto the l1 ball and each block
    is rescaled accordingly. ``layout`` is a BlockLayout (only its offsets
    are used) or an offsets array.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    off = _offsets(layout)
    y = np.asarray(y, dtype=float)
    norms = kernels.block_l2_norms(y, off)
    if norms.sum() <= eta:
        return y.copy()
    target = project_l1_ball(eta, norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, target / norms, 0.0)
    return y * np.repeat(scale, np.diff(off))


def project_l1inf_ball(layout, eta, y, tol=1e-10, return_info=False):
    """Projection onto ``{y : sum_l ||y_l||_inf <= eta}`` by multiplier bisection.

    For a multiplier ``lam`` each block is clipped at the soft threshold that
    puts its excess on an l1 ball of radius ``lam``. The bracket starts at
    ``[0, ||y||_1]`` and the returned point is always the feasible end.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    p, lam, iters = kernels.l1inf_ball(np.asarray(y, dtype=float), _offsets(layout), float(eta), float(tol))
    if return_info:
        return p, {"lambda": lam, "iters": iters}
    return p
