# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``epiprox._kernels_py``.

Loops run without the GIL so callers may split block ranges across threads.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow, isfinite
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

DEF MAX_ROOT_ITERS = 200
DEF ROOT_RTOL = 1e-14
DEF DBL_EPS = 2.220446049250313e-16
DEF DBL_MIN = 2.2250738585072014e-308

ctypedef struct keyed:
    double v
    double w


cdef int _cmp_keyed(const void* a, const void* b) noexcept nogil:
    cdef double x = (<keyed*>a).v
    cdef double y = (<keyed*>b).v
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


cdef inline void _sort_keyed(keyed* buf, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef keyed cur
    if n > 24:
        qsort(buf, n, sizeof(keyed), _cmp_keyed)
        return
    for i in range(1, n):
        cur = buf[i]
        j = i - 1
        while j >= 0 and buf[j].v > cur.v:
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = cur


cdef inline double _sign(double v) noexcept nogil:
    if v > 0:
        return 1.0
    if v < 0:
        return -1.0
    return 0.0


cdef double _power_root(double a, double tau, double beta, double zeta) noexcept nogil:
    cdef double lo = 0.0
    cdef double hi = a
    cdef double x = a
    cdef double f, d, step, c, g
    # relative to |y| so tiny inputs still resolve their much smaller root
    cdef double ftol = ROOT_RTOL * a
    cdef int it
    if zeta > 0:
        lo = pow(zeta / tau, 1.0 / beta)
    for it in range(MAX_ROOT_ITERS):
        # x > 0 here, so one pow gives every power of x needed
        c = pow(x, beta - 1.0)
        g = tau * c * x - zeta
        f = beta * tau * c * g + x - a
        if fabs(f) <= ftol:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        if hi <= 2.0 * DBL_MIN:
            # the root is below the normal range; lo never overshoots it
            return lo
        if hi - lo <= 4.0 * DBL_EPS * hi:
            return 0.5 * (lo + hi)
        d = beta * tau * ((beta - 1.0) * (c / x) * g + beta * tau * c * c) + 1.0
        step = x - f / d
        if not isfinite(step) or step <= lo or step >= hi:
            # near beta = 1 the root can sit hundreds of decades below |y|
            if hi > 4.0 * lo:
                step = sqrt(lo if lo > DBL_MIN else DBL_MIN) * sqrt(hi)
            else:
                step = 0.5 * (lo + hi)
        elif fabs(step - x) <= 2.0 * DBL_EPS * x:
            # Newton has stalled at rounding level
            return step
        x = step
    return x


cdef inline double _prox_scalar(double y, double tau, double beta, double zeta) noexcept nogil:
    cdef double a = fabs(y)
    cdef double chi
    if zeta > 0 and tau * pow(a, beta) <= zeta:
        return y
    if beta == 1.0:
        chi = a + tau * zeta
        if chi < 0:
            chi = 0.0
        chi = chi / (1.0 + tau * tau)
    elif a == 0:
        chi = 0.0
    else:
        chi = _power_root(a, tau, beta, zeta)
    return _sign(y) * chi


def prox_power_max_sq(y, tau, beta, zeta):
    """Elementwise prox of 0.5*max(tau*|.|**beta - zeta, 0)**2."""
    ya = np.ascontiguousarray(y, dtype=np.float64)
    shape = ya.shape
    cdef const double[::1] yv = ya.ravel()
    cdef const double[::1] tv = np.ascontiguousarray(np.broadcast_to(np.asarray(tau, dtype=np.float64), shape)).ravel()
    cdef const double[::1] bv = np.ascontiguousarray(np.broadcast_to(np.asarray(beta, dtype=np.float64), shape)).ravel()
    cdef const double[::1] zv = np.ascontiguousarray(np.broadcast_to(np.asarray(zeta, dtype=np.float64), shape)).ravel()
    out = np.empty(yv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _prox_scalar(yv[i], tv[i], bv[i], zv[i])
    return out.reshape(shape)


def epi_l2_blocks(y, offsets, tau, zeta):
    """Project each (y_l, zeta_l) onto the epigraph of tau_l*||.||_2."""
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[::1] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(zeta, dtype=np.float64)
    cdef Py_ssize_t L = off.shape[0] - 1
    p = np.empty(yv.shape[0])
    theta = np.empty(L)
    cdef double[::1] pv = p
    cdef double[::1] thv = theta
    cdef Py_ssize_t l, m
    cdef double s, nrm, t, z, alpha
    with nogil:
        for l in range(L):
            s = 0.0
            for m in range(off[l], off[l + 1]):
                s = s + yv[m] * yv[m]
            nrm = sqrt(s)
            t = tv[l]
            z = zv[l]
            if nrm < -t * z:
                for m in range(off[l], off[l + 1]):
                    pv[m] = 0.0
                thv[l] = 0.0
            elif t * nrm < z:
                for m in range(off[l], off[l + 1]):
                    pv[m] = yv[m]
                thv[l] = z
            elif nrm == 0.0:
                for m in range(off[l], off[l + 1]):
                    pv[m] = 0.0
                thv[l] = z if z > 0 else 0.0
            else:
                alpha = (1.0 + t * z / nrm) / (1.0 + t * t)
                for m in range(off[l], off[l + 1]):
                    pv[m] = alpha * yv[m]
                thv[l] = alpha * t * nrm
    return p, theta


def epi_linf_blocks(y, offsets, taus, zeta):
    """Project each (y_l, zeta_l) onto the epigraph of max_m |y_lm|/tau_lm."""
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[::1] tv = np.ascontiguousarray(taus, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(zeta, dtype=np.float64)
    cdef Py_ssize_t L = off.shape[0] - 1
    p = np.empty(yv.shape[0])
    theta = np.empty(L)
    cdef double[::1] pv = p
    cdef double[::1] thv = theta
    cdef Py_ssize_t l, m, k, n, maxn = 0
    cdef double suf_t, suf_u, psi, z, th, b, v, sel_t, sel_u
    cdef keyed* buf
    for l in range(L):
        if off[l + 1] - off[l] > maxn:
            maxn = off[l + 1] - off[l]
    buf = <keyed*>malloc((maxn + 1) * sizeof(keyed))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for l in range(L):
                n = off[l + 1] - off[l]
                z = zv[l]
                for k in range(n):
                    m = off[l] + k
                    buf[k].v = fabs(yv[m]) / tv[m]
                    buf[k].w = tv[m] * tv[m]
                _sort_keyed(buf, n)
                # scan from the top: suffix sums over m >= k, pick the first k
                # (ascending) with psi_k >= zeta
                suf_t = 0.0
                suf_u = 0.0
                sel_t = 0.0
                sel_u = 0.0
                k = n
                while k > 0:
                    k -= 1
                    suf_t = suf_t + buf[k].w
                    suf_u = suf_u + buf[k].w * buf[k].v
                    psi = buf[k].v * (1.0 + suf_t) - suf_u
                    if psi >= z:
                        sel_t = suf_t
                        sel_u = suf_u
                    else:
                        break
                th = z + sel_u
                if th < 0:
                    th = 0.0
                th = th / (1.0 + sel_t)
                thv[l] = th
                for m in range(off[l], off[l + 1]):
                    b = tv[m] * th
                    v = yv[m]
                    if v > b:
                        v = b
                    elif v < -b:
                        v = -b
                    pv[m] = v
    finally:
        free(buf)
    return p, theta


def block_l2_norms(y, offsets):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t L = off.shape[0] - 1
    out = np.empty(L)
    cdef double[::1] ov = out
    cdef Py_ssize_t l, m
    cdef double s
    with nogil:
        for l in range(L):
            s = 0.0
            for m in range(off[l], off[l + 1]):
                s = s + yv[m] * yv[m]
            ov[l] = sqrt(s)
    return out


def block_linf_norms(y, offsets):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t L = off.shape[0] - 1
    out = np.empty(L)
    cdef double[::1] ov = out
    cdef Py_ssize_t l, m
    cdef double s
    with nogil:
        for l in range(L):
            s = 0.0
            for m in range(off[l], off[l + 1]):
                if fabs(yv[m]) > s:
                    s = fabs(yv[m])
            ov[l] = s
    return out


cdef double _thresholds(double[::1] a, double[::1] cs, const long long[::1] off,
                        double lam, double[::1] t) noexcept nogil:
    cdef Py_ssize_t l, k, n, kstar
    cdef double tk, total = 0.0, tl
    for l in range(off.shape[0] - 1):
        n = off[l + 1] - off[l]
        kstar = 1
        for k in range(n):
            tk = (cs[off[l] + k] - lam) / (k + 1)
            if a[off[l] + k] > tk:
                kstar = k + 1
            else:
                break
        tl = (cs[off[l] + kstar - 1] - lam) / kstar
        if tl < 0:
            tl = 0.0
        t[l] = tl
        total += tl
    return total


def l1inf_ball(y, offsets, double eta, double tol):
    """Project y onto {sum_l ||y_l||_inf <= eta} by bisection on the multiplier.

    Returns ``(p, lam, iters)``.
    """
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t L = off.shape[0] - 1
    cdef Py_ssize_t M = yv.shape[0]
    a_arr = np.empty(M)
    cs_arr = np.empty(M)
    t_hi_arr = np.zeros(L)
    t_mid_arr = np.zeros(L)
    cdef double[::1] a = a_arr
    cdef double[::1] cs = cs_arr
    cdef double[::1] t_hi = t_hi_arr
    cdef double[::1] t_mid = t_mid_arr
    cdef Py_ssize_t l, k, n, maxn = 0, m
    cdef double total_l1 = 0.0, total_inf = 0.0, acc
    cdef double lo, hi, mid, s_hi, s_mid, bnd, v
    cdef int iters = 0
    cdef keyed* buf
    for l in range(L):
        if off[l + 1] - off[l] > maxn:
            maxn = off[l + 1] - off[l]
    buf = <keyed*>malloc((maxn + 1) * sizeof(keyed))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for l in range(L):
                n = off[l + 1] - off[l]
                for k in range(n):
                    buf[k].v = -fabs(yv[off[l] + k])
                    buf[k].w = 0.0
                _sort_keyed(buf, n)
                acc = 0.0
                for k in range(n):
                    a[off[l] + k] = -buf[k].v
                    acc = acc + a[off[l] + k]
                    cs[off[l] + k] = acc
                if n > 0:
                    total_inf += a[off[l]]
                total_l1 += acc
    finally:
        free(buf)
    p = np.array(yv, copy=True)
    if total_inf <= eta:
        return p, 0.0, 0
    cdef double[::1] pv = p
    with nogil:
        lo = 0.0
        hi = total_l1
        s_hi = _thresholds(a, cs, off, hi, t_hi)
        while eta - s_hi > tol * (1.0 + eta) and hi - lo > 1e-15 * hi:
            mid = 0.5 * (lo + hi)
            s_mid = _thresholds(a, cs, off, mid, t_mid)
            iters += 1
            if s_mid > eta:
                lo = mid
            else:
                hi = mid
                s_hi = s_mid
                for l in range(L):
                    t_hi[l] = t_mid[l]
        for l in range(L):
            bnd = t_hi[l]
            for m in range(off[l], off[l + 1]):
                v = yv[m]
                if v > bnd:
                    v = bnd
                elif v < -bnd:
                    v = -bnd
                pv[m] = v
    return p, hi, iters
