"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_kernels`` extension. Blocks are described CSR-style: block ``l`` owns
``y[offsets[l]:offsets[l + 1]]``.

Blocks are processed in groups of equal size laid out as 2-D arrays, so
the result for one block never depends on which other blocks share the
call. The stacked projector relies on this to be bit-identical to the
per-block path.
"""
import numpy as np

MAX_ROOT_ITERS = 200
ROOT_RTOL = 1e-14
DBL_MIN = np.finfo(float).tiny


def _size_groups(offsets):
    sizes = np.diff(offsets)
    for size in np.unique(sizes):
        ids = np.flatnonzero(sizes == size)
        idx = offsets[ids][:, None] + np.arange(size)[None, :]
        yield ids, idx


def prox_power_max_sq(y, tau, beta, zeta):
    """Elementwise prox of 0.5*max(tau*|.|**beta - zeta, 0)**2."""
    y = np.asarray(y, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), y.shape)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), y.shape)
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), y.shape)
    a = np.abs(y)
    out = y.copy()

    inside = (zeta > 0) & (tau * a ** beta <= zeta)
    lin = (~inside) & (beta == 1.0)
    out[lin] = np.maximum(a[lin] + tau[lin] * zeta[lin], 0.0) / (1.0 + tau[lin] ** 2)

    pw = np.flatnonzero((~inside) & (beta != 1.0) & (a > 0))
    if pw.size:
        chi = _power_root(a[pw], tau[pw], beta[pw], zeta[pw])
        out[pw] = chi
    zero_pw = (~inside) & (beta != 1.0) & (a == 0)
    out[zero_pw] = 0.0

    done = ~inside
    out[done] = np.sign(y[done]) * out[done]
    return out


def _power_root(a, tau, beta, zeta):
    lo = np.where(zeta > 0, (np.maximum(zeta, 0.0) / tau) ** (1.0 / beta), 0.0)
    hi = a.copy()
    x = hi.copy()
    active = np.ones(a.shape, dtype=bool)
    # relative to |y| so tiny inputs still resolve their much smaller root
    ftol = ROOT_RTOL * a
    for _ in range(MAX_ROOT_ITERS):
        ids = np.flatnonzero(active)
        if ids.size == 0:
            break
        xa = x[ids]
        ta, ba = tau[ids], beta[ids]
        c = xa ** (ba - 1.0)
        g = ta * c * xa - zeta[ids]
        f = ba * ta * c * g + xa - a[ids]
        conv = np.abs(f) <= ftol[ids]
        neg = f < 0
        lo[ids] = np.where(neg, xa, lo[ids])
        hi[ids] = np.where(neg, hi[ids], xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = ba * ta * ((ba - 1.0) * (c / xa) * g + ba * ta * c * c) + 1.0
            step = xa - f / d
        l, h = lo[ids], hi[ids]
        bad = ~np.isfinite(step) | (step <= l) | (step >= h)
        # near beta = 1 the root can sit hundreds of decades below |y|
        mid = np.where(h > 4.0 * l, np.sqrt(np.maximum(l, DBL_MIN)) * np.sqrt(h), 0.5 * (l + h))
        xn = np.where(bad, mid, step)
        # a root below the normal range is reported as lo, which never overshoots it
        under = h <= 2.0 * DBL_MIN
        xn = np.where(under, l, xn)
        tiny = ((h - l) <= 4.0 * np.finfo(float).eps * h) | under
        # Newton stalled at rounding level
        stall = ~bad & (np.abs(step - xa) <= 2.0 * np.finfo(float).eps * xa)
        stop = conv | tiny | stall
        x[ids] = np.where(conv, xa, xn)
        active[ids[stop]] = False
    return x


def epi_l2_blocks(y, offsets, tau, zeta):
    """Project each (y_l, zeta_l) onto the epigraph of tau_l*||.||_2."""
    y = np.ascontiguousarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=np.int64)
    tau = np.asarray(tau, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    p = np.empty_like(y)
    theta = np.empty(len(offsets) - 1)
    for ids, idx in _size_groups(offsets):
        Y = y[idx]
        t = tau[ids]
        z = zeta[ids]
        nrm = np.sqrt(np.sum(Y * Y, axis=1))
        apex = nrm < -t * z
        keep = (~apex) & (t * nrm < z)
        cone = ~(apex | keep)
        zero_y = cone & (nrm == 0.0)
        cone &= ~zero_y
        P = np.zeros_like(Y)
        th = np.zeros(len(ids))
        P[keep] = Y[keep]
        th[keep] = z[keep]
        th[zero_y] = np.maximum(z[zero_y], 0.0)
        tc, zc, nc = t[cone], z[cone], nrm[cone]
        alpha = (1.0 + tc * zc / nc) / (1.0 + tc * tc)
        P[cone] = alpha[:, None] * Y[cone]
        th[cone] = alpha * tc * nc
        p[idx] = P
        theta[ids] = th
    return p, theta


def epi_linf_blocks(y, offsets, taus, zeta):
    """Project each (y_l, zeta_l) onto the epigraph of max_m |y_lm|/tau_lm."""
    y = np.ascontiguousarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=np.int64)
    taus = np.asarray(taus, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    p = np.empty_like(y)
    theta = np.empty(len(offsets) - 1)
    for ids, idx in _size_groups(offsets):
        Y = y[idx]
        T = taus[idx]
        z = zeta[ids]
        nu = np.abs(Y) / T
        order = np.argsort(nu, axis=1, kind="stable")
        nus = np.take_along_axis(nu, order, axis=1)
        t2 = np.take_along_axis(T, order, axis=1) ** 2
        suf_t = np.cumsum(t2[:, ::-1], axis=1)[:, ::-1]
        suf_u = np.cumsum((t2 * nus)[:, ::-1], axis=1)[:, ::-1]
        psi = nus * (1.0 + suf_t) - suf_u
        k = np.sum(psi < z[:, None], axis=1)
        n, m = Y.shape
        suf_t = np.concatenate([suf_t, np.zeros((n, 1))], axis=1)
        suf_u = np.concatenate([suf_u, np.zeros((n, 1))], axis=1)
        rows = np.arange(n)
        th = np.maximum(z + suf_u[rows, k], 0.0) / (1.0 + suf_t[rows, k])
        bound = T * th[:, None]
        p[idx] = np.clip(Y, -bound, bound)
        theta[ids] = th
    return p, theta


def block_l2_norms(y, offsets):
    y = np.asarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=np.int64)
    out = np.empty(len(offsets) - 1)
    for ids, idx in _size_groups(offsets):
        Y = y[idx]
        out[ids] = np.sqrt(np.sum(Y * Y, axis=1))
    return out


def block_linf_norms(y, offsets):
    y = np.asarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=np.int64)
    out = np.empty(len(offsets) - 1)
    for ids, idx in _size_groups(offsets):
        out[ids] = np.max(np.abs(y[idx]), axis=1)
    return out


def l1inf_ball(y, offsets, eta, tol):
    """Project y onto {sum_l ||y_l||_inf <= eta} by bisection on the multiplier.

    Returns ``(p, lam, iters)``.
    """
    y = np.ascontiguousarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=np.int64)
    groups = []
    total_l1 = 0.0
    total_inf = 0.0
    for ids, idx in _size_groups(offsets):
        A = -np.sort(-np.abs(y[idx]), axis=1)
        cs = np.cumsum(A, axis=1)
        k = np.arange(1, A.shape[1] + 1, dtype=float)
        groups.append((idx, A, cs, k))
        total_l1 += cs[:, -1].sum()
        total_inf += A[:, 0].sum()
    if total_inf <= eta:
        return y.copy(), 0.0, 0

    def thresholds(lam):
        out = []
        for _, A, cs, k in groups:
            tk = (cs - lam) / k
            kstar = np.sum(A > tk, axis=1)
            kstar = np.maximum(kstar, 1)
            rows = np.arange(A.shape[0])
            t = (cs[rows, kstar - 1] - lam) / kstar
            out.append(np.maximum(t, 0.0))
        return out

    lo, hi = 0.0, total_l1
    t_hi = thresholds(hi)
    s_hi = sum(t.sum() for t in t_hi)
    iters = 0
    while eta - s_hi > tol * (1.0 + eta) and hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        t_mid = thresholds(mid)
        s_mid = sum(t.sum() for t in t_mid)
        iters += 1
        if s_mid > eta:
            lo = mid
        else:
            hi, t_hi, s_hi = mid, t_mid, s_mid
    p = np.empty_like(y)
    for (idx, _, _, _), t in zip(groups, t_hi):
        Y = y[idx]
        p[idx] = np.clip(Y, -t[:, None], t[:, None])
    return p, hi, iters
