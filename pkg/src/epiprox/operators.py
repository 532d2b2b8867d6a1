"""Linear operators on flat real vectors.

Every operator carries an upper bound on its spectral norm, which is all the
primal-dual step-size rule needs. Images are stored row-major and all
boundary handling is periodic.
"""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class LinOp:
    """A linear map ``R^in_dim -> R^out_dim`` with its adjoint.

    Parameters
    ----------
    in_dim, out_dim : int
        Input and output dimensions.
    apply, adjoint : callable
        Forward map and its transpose.
    norm_bound : float
        Upper bound on the spectral norm.
    """

    in_dim: int
    out_dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    norm_bound: float
    name: str = "linop"

    def __call__(self, x):
        return self.apply(x)

    @property
    def T(self):
        return LinOp(self.out_dim, self.in_dim, self.adjoint, self.apply,
                     self.norm_bound, f"{self.name}^T")

    def __matmul__(self, other):
        if not isinstance(other, LinOp):
            return NotImplemented
        if other.out_dim != self.in_dim:
            raise ValueError(
                f"cannot compose {self.name} (in {self.in_dim}) with "
                f"{other.name} (out {other.out_dim})")
        return LinOp(
            other.in_dim, self.out_dim,
            lambda x: self.apply(other.apply(x)),
            lambda v: other.adjoint(self.adjoint(v)),
            self.norm_bound * other.norm_bound,
            f"{self.name}@{other.name}",
        )

    def with_norm_bound(self, bound):
        return LinOp(self.in_dim, self.out_dim, self.apply, self.adjoint,
                     float(bound), self.name)

    def to_dense(self):
        """Materialize the matrix column by column (tests and tiny problems)."""
        cols = [self.apply(e) for e in np.eye(self.in_dim)]
        return np.array(cols).T.reshape(self.out_dim, self.in_dim)


@dataclass(frozen=True)
class ImageGrid:
    rows: int
    cols: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.size != self.rows * self.cols:
            raise ValueError("pixel count does not match rows*cols")

    @property
    def array(self):
        return self.pixels.reshape(self.rows, self.cols)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        return cls(arr.shape[0], arr.shape[1], arr.ravel().copy())


def identity(n):
    return LinOp(n, n, lambda x: x, lambda v: v, 1.0, "I")


def diagonal(d):
    d = np.asarray(d, dtype=float)
    return LinOp(d.size, d.size, lambda x: d * x, lambda v: d * v,
                 float(np.max(np.abs(d))) if d.size else 0.0, "diag")


def selector(dim, start, stop):
    """Restriction of ``R^dim`` to the slice ``[start, stop)``."""
    def adj(v):
        out = np.zeros(dim)
        out[start:stop] = v
        return out

    return LinOp(dim, stop - start, lambda x: x[start:stop], adj, 1.0,
                 f"sel[{start}:{stop}]")


def block_diag(ops: Sequence[LinOp]):
    """Operator acting on concatenated inputs, one operator per segment."""
    ins = np.cumsum([0] + [op.in_dim for op in ops])
    outs = np.cumsum([0] + [op.out_dim for op in ops])

    def fwd(x):
        return np.concatenate([op.apply(x[ins[i]:ins[i + 1]]) for i, op in enumerate(ops)])

    def adj(v):
        return np.concatenate([op.adjoint(v[outs[i]:outs[i + 1]]) for i, op in enumerate(ops)])

    return LinOp(int(ins[-1]), int(outs[-1]), fwd, adj,
                 max(op.norm_bound for op in ops), "blkdiag")


def vstack(ops: Sequence[LinOp]):
    """Stack operators sharing an input space."""
    n = ops[0].in_dim
    if any(op.in_dim != n for op in ops):
        raise ValueError("vstack needs a common input dimension")
    outs = np.cumsum([0] + [op.out_dim for op in ops])

    def adj(v):
        acc = np.zeros(n)
        for i, op in enumerate(ops):
            acc += op.adjoint(v[outs[i]:outs[i + 1]])
        return acc

    return LinOp(n, int(outs[-1]),
                 lambda x: np.concatenate([op.apply(x) for op in ops]), adj,
                 float(np.sqrt(sum(op.norm_bound ** 2 for op in ops))), "vstack")


def _shift(img, q1, q2):
    # value at n is img[n + q] with periodic wrap
    return np.roll(img, (-q1, -q2), axis=(0, 1))


def make_uniform_blur(rows, cols, k):
    """Periodic k-by-k moving average."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"blur size must be a positive odd integer, got {k}")
    if k > min(rows, cols):
        raise ValueError("blur size exceeds image size")
    r = k // 2
    shifts = [(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1)]
    w = 1.0 / (k * k)

    def fwd(x):
        img = x.reshape(rows, cols)
        acc = np.zeros_like(img)
        for a, b in shifts:
            acc += _shift(img, a, b)
        return (w * acc).ravel()

    # the kernel is symmetric, so the adjoint is the same convolution
    return LinOp(rows * cols, rows * cols, fwd, fwd, 1.0, f"blur{k}")


def make_decimation(mask):
    """Row selection keeping the ``True`` entries of ``mask`` in index order."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("decimation mask keeps no samples")
    keep = np.flatnonzero(mask)
    n = mask.size

    def adj(v):
        out = np.zeros(n)
        out[keep] = v
        return out

    return LinOp(n, keep.size, lambda x: x[keep], adj, 1.0, "D")


def make_difference_stack(rows, cols, offsets):
    """Stack of periodic differences ``x(n) - x(n + q)``, one image per offset."""
    offsets = [tuple(int(v) for v in q) for q in offsets]
    if not offsets:
        raise ValueError("need at least one offset")
    if (0, 0) in offsets:
        raise ValueError("offset (0, 0) gives a zero operator")
    n = rows * cols
    nq = len(offsets)

    def fwd(x):
        img = x.reshape(rows, cols)
        out = np.empty((nq, rows, cols))
        for i, (a, b) in enumerate(offsets):
            out[i] = img - _shift(img, a, b)
        return out.ravel()

    def adj(v):
        stack = v.reshape(nq, rows, cols)
        acc = np.zeros((rows, cols))
        for i, (a, b) in enumerate(offsets):
            acc += stack[i] - _shift(stack[i], -a, -b)
        return acc.ravel()

    return LinOp(n, nq * n, fwd, adj, 2.0 * np.sqrt(nq), f"diff{nq}")


def make_block_weighting(layout):
    """Gather ``weights * u[indices]`` block by block (overlaps allowed)."""
    idx = layout.indices
    w = layout.weights
    if np.any(w <= 0):
        raise ValueError("block weights must be strictly positive")
    n = layout.source_dim
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("block index out of range")
    mult = np.bincount(idx, minlength=n).max() if idx.size else 0

    def adj(v):
        return np.bincount(idx, weights=w * v, minlength=n)

    return LinOp(n, idx.size, lambda u: w * u[idx], adj,
                 float(w.max() * np.sqrt(mult)) if idx.size else 0.0, "Lambda")


def make_pairwise_difference(n, a, b, w, norm_bound=None):
    """Weighted pairwise differences ``w_e * (x[a_e] - x[b_e])``.

    Equals a block weighting composed with a difference stack, without
    materializing the full stack.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    w = np.asarray(w, dtype=float)

    def adj(v):
        wv = w * v
        return np.bincount(a, weights=wv, minlength=n) - np.bincount(b, weights=wv, minlength=n)

    if norm_bound is None:
        # ||x[a] - x[b]||^2 <= 2 sum_e (x[a_e]^2 + x[b_e]^2) <= 2 * max degree * ||x||^2
        deg = np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
        norm_bound = float(np.abs(w).max() * np.sqrt(2.0 * deg.max())) if a.size else 0.0
    return LinOp(n, a.size, lambda x: w * (x[a] - x[b]), adj, float(norm_bound), "pairdiff")


def _interleave(c):
    out = np.empty(2 * c.size)
    out[0::2] = c.real
    out[1::2] = c.imag
    return out


def make_unitary_dft(n, bins=None):
    """Unitary DFT of a real vector, complex bins stored as (re, im) pairs.

    With ``bins`` given, only those frequency indices are returned, in order.
    """
    if n < 2:
        raise ValueError("DFT length must be at least 2")
    scale = 1.0 / np.sqrt(n)
    sel = np.arange(n) if bins is None else np.asarray(bins, dtype=int)

    def fwd(x):
        return _interleave(np.fft.fft(x)[sel] * scale)

    def adj(v):
        spec = np.zeros(n, dtype=complex)
        np.add.at(spec, sel, v[0::2] + 1j * v[1::2])
        return np.fft.ifft(spec).real * (n * scale)

    return LinOp(n, 2 * sel.size, fwd, adj, 1.0, "dft")


def estimate_norm(op, iters=200, tol=1e-10, seed=0, safety=1.01):
    """Power iteration on ``op^T op``; returns ``safety * sqrt(lambda_max)``."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_dim)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = op.adjoint(op.apply(x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        lam_new = float(x @ y)
        x = y / nrm
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return safety * float(np.sqrt(max(lam, 0.0)))
