"""Constrained image restoration with TV and non-local TV constraints.

Observation model: ``z = D A x + b`` with ``A`` a periodic uniform blur,
``D`` a random decimation and ``b`` white Gaussian noise. The estimate
minimizes ``||D A x - z||^2`` over ``x in [0, 255]^N`` subject to one
l1,p (p = 2 or inf) constraint on (weighted) pixel differences.

Non-local weights come from a two-step procedure: a first l2-TV estimate
provides patches, and every pixel keeps its ``M`` most similar neighbours
in a ``Q x Q`` search window. Patch similarity is a Gaussian-windowed
squared distance (window std ``Q_patch / 4``), and weights are
``exp(-d^2 / delta^2)`` normalized to sum to one per pixel.
"""
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from . import ballproj
from .constraints import BlockLayout, DecomposableConstraint, check_membership
from .epigraph import EuclideanNorm, WeightedInfNorm
from .operators import (ImageGrid, LinOp, estimate_norm, make_block_weighting,
                        make_decimation, make_difference_stack, make_pairwise_difference,
                        make_uniform_blur)
from .solver import (DualTerm, SmoothTerm, SolverConfig, SolverProblem, SolverTrace,
                     SplitConstraint, build_split_problem, solve)

BOX = (0.0, 255.0)
SNR_CAP_DB = 300.0
DIRECT_TOL = 1e-6
DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class DegradationSpec:
    blur_size: int = 3
    keep_fraction: float = 0.4
    noise_sigma: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.blur_size < 1 or self.blur_size % 2 == 0:
            raise ValueError("blur_size must be a positive odd integer")
        if not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class NltvSpec:
    window: int = 11
    patch: int = 5
    delta: float = 35.0
    max_neighbors: int = 14
    p: str = "2"
    eta: Optional[float] = None

    def __post_init__(self):
        if self.window % 2 == 0 or self.patch % 2 == 0:
            raise ValueError("window and patch sizes must be odd")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 1 <= self.max_neighbors <= self.window ** 2 - 1:
            raise ValueError("max_neighbors must lie in [1, window**2 - 1]")
        object.__setattr__(self, "p", _norm_p(self.p))


def _norm_p(p):
    s = str(p).lower()
    if s in ("2", "2.0", "l2"):
        return "2"
    if s in ("inf", "infinity", "linf"):
        return "inf"
    raise ValueError(f"p must be 2 or inf, got {p!r}")


@dataclass(frozen=True)
class NltvGraph:
    """Per-pixel neighbourhoods: ``offsets[neighbors[l, j]]`` is the j-th
    neighbour offset of pixel ``l`` and ``weights[l, j]`` its weight."""

    rows: int
    cols: int
    offsets: tuple
    neighbors: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class ConstraintModel:
    """A constraint ``sum_l h_l((Lambda F x)_l) <= eta`` ready for the solver."""

    F: LinOp
    layout: BlockLayout
    kinds: tuple
    eta: float
    p: str
    label: str
    lifted_norm: Optional[float] = None
    lifted_op: Optional[LinOp] = None

    @property
    def constraint(self):
        return DecomposableConstraint(self.layout, self.kinds, self.eta)

    def value(self, x):
        return self.constraint.value(self.F.apply(np.asarray(x, dtype=float)))

    def with_eta(self, eta):
        return replace(self, eta=float(eta))


@dataclass
class RestoredResult:
    image: ImageGrid
    snr_db: Optional[float]
    ssim: Optional[float]
    trace: SolverTrace
    objective: float = float("nan")
    violation: float = float("nan")
    eta: float = float("nan")
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def iters(self):
        return self.trace.iterations

    @property
    def converged(self):
        return self.trace.converged


# ---------------------------------------------------------------------------
# degradation

def degrade(img: ImageGrid, spec: DegradationSpec):
    """Blur, decimate and add noise. Returns ``(z, mask, A)``."""
    n = img.rows * img.cols
    rng = np.random.default_rng(spec.seed)
    keep = min(n, math.ceil(spec.keep_fraction * n - 1e-9))
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=keep, replace=False)] = True
    A = make_uniform_blur(img.rows, img.cols, spec.blur_size)
    z = A.apply(img.pixels)[mask]
    if spec.noise_sigma > 0:
        z = z + rng.normal(0.0, spec.noise_sigma, size=keep)
    return z, mask, A


def zero_filled(z, mask):
    out = np.zeros(mask.size)
    out[mask] = z
    return out


# ---------------------------------------------------------------------------
# constraints

def build_tv_constraint(rows, cols, p, eta):
    """Isotropic (p=2) or max (p=inf) TV over forward differences."""
    if rows < 2 or cols < 2:
        raise ValueError("TV needs at least a 2x2 image")
    p = _norm_p(p)
    n = rows * cols
    F = make_difference_stack(rows, cols, [(0, 1), (1, 0)])
    idx = np.stack([np.arange(n), n + np.arange(n)], axis=1).ravel()
    layout = BlockLayout(idx, 2 * np.arange(n + 1), np.ones(2 * n), 2 * n)
    kind = EuclideanNorm(1.0) if p == "2" else WeightedInfNorm(np.ones(2))
    # the gather is a permutation, so ||Lambda F|| = ||F||
    return ConstraintModel(F, layout, (kind,) * n, float(eta), p, f"tv{p}", F.norm_bound)


def build_nltv_constraint(graph: NltvGraph, p, eta, norm_iters=100):
    """Weighted non-local differences over the neighbourhoods in ``graph``."""
    p = _norm_p(p)
    n = graph.rows * graph.cols
    nb = np.asarray(graph.neighbors)
    w = np.asarray(graph.weights, dtype=float)
    if nb.shape[0] != n or nb.shape[1] < 1:
        raise ValueError("every pixel needs a nonempty neighbourhood")
    if np.any(w <= 0):
        raise ValueError("non-local weights must be strictly positive")
    used = np.unique(nb)
    pos = np.full(len(graph.offsets), -1, dtype=np.int64)
    pos[used] = np.arange(used.size)
    F = make_difference_stack(graph.rows, graph.cols, [graph.offsets[j] for j in used])
    m = nb.shape[1]
    idx = (pos[nb] * n + np.arange(n)[:, None]).ravel()
    off = m * np.arange(n + 1)
    if p == "2":
        layout = BlockLayout(idx, off, np.sqrt(w).ravel(), F.out_dim)
        kinds = (EuclideanNorm(1.0),) * n
    else:
        layout = BlockLayout(idx, off, np.ones(idx.size), F.out_dim)
        kinds = tuple(WeightedInfNorm(1.0 / w[l]) for l in range(n))
    # fused Lambda F: entry e is weight * (x[l] - x[l + q])
    src = layout.indices
    nbr_flat = np.stack([_neighbor_index(graph.rows, graph.cols, graph.offsets[j]) for j in used]).ravel()
    a = src % n
    b = nbr_flat[src]
    fused = make_pairwise_difference(n, a, b, layout.weights)
    lifted = estimate_norm(fused, iters=norm_iters)
    return ConstraintModel(F, layout, kinds, float(eta), p, f"nltv{p}", lifted,
                           fused.with_norm_bound(lifted))


def _neighbor_index(rows, cols, q):
    grid = np.arange(rows * cols).reshape(rows, cols)
    return np.roll(grid, (-q[0], -q[1]), axis=(0, 1)).ravel()


def _gaussian_window(size, std):
    r = size // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / std) ** 2)
    g2 = np.outer(g, g)
    return g2 / g2.sum()


def nltv_weights(x_est: ImageGrid, spec: NltvSpec):
    """Patch-similarity neighbourhoods of an image estimate."""
    img = x_est.array
    r = spec.window // 2
    offsets = tuple((a, b) for a in range(-r, r + 1) for b in range(-r, r + 1) if (a, b) != (0, 0))
    g = _gaussian_window(spec.patch, spec.patch / 4.0)
    d2 = np.empty((len(offsets), img.size))
    for j, (a, b) in enumerate(offsets):
        diff = img - np.roll(img, (-a, -b), axis=(0, 1))
        d2[j] = ndimage.correlate(diff * diff, g, mode="wrap").ravel()
    d2 = d2.T
    # subtracting the per-pixel minimum only rescales before normalization
    raw = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) / spec.delta ** 2)
    order = np.argsort(-raw, axis=1, kind="stable")[:, :spec.max_neighbors]
    kept = np.take_along_axis(raw, order, axis=1)
    kept /= kept.sum(axis=1, keepdims=True)
    return NltvGraph(x_est.rows, x_est.cols, offsets, order, kept)


# ---------------------------------------------------------------------------
# metrics

def snr_db(reference, estimate):
    ref = np.asarray(reference, dtype=float).ravel()
    err = np.asarray(estimate, dtype=float).ravel() - ref
    e2 = float(err @ err)
    if e2 == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * math.log10(float(ref @ ref) / e2))


def ssim(reference, estimate, data_range=255.0, win_size=11, sigma=1.5):
    """Mean structural similarity over fully contained Gaussian windows."""
    a = np.asarray(reference, dtype=float)
    b = np.asarray(estimate, dtype=float)
    if a.shape != b.shape:
        raise ValueError("ssim needs images of the same shape")
    if a.ndim == 1:
        raise ValueError("ssim needs 2-D images")
    win_size = min(win_size, *a.shape)
    if win_size % 2 == 0:
        win_size -= 1
    g = np.exp(-0.5 * ((np.arange(win_size) - win_size // 2) / sigma) ** 2)
    win = np.outer(g, g)
    win /= win.sum()

    def filt(u):
        return signal.correlate2d(u, win, mode="valid")

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a * mu_a
    sbb = filt(b * b) - mu_b * mu_b
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# solve

def _direct_projector(model: ConstraintModel):
    """Lifted operator with the kind weights folded in, plus the ball projector."""
    lay = model.layout
    if model.p == "2":
        taus = np.repeat([k.tau for k in model.kinds], lay.sizes)
        weights = lay.weights / taus
        proj = lambda u: ballproj.project_l12_ball(lay.offsets, model.eta, u)  # noqa: E731
    else:
        taus = np.concatenate([k.taus for k in model.kinds])
        weights = lay.weights / taus
        proj = lambda u: ballproj.project_l1inf_ball(lay.offsets, model.eta, u, tol=DIRECT_TOL)  # noqa: E731
    lay_d = BlockLayout(lay.indices, lay.offsets, weights, lay.source_dim)
    if model.lifted_op is not None:
        scaled = weights / lay.weights
        inner = model.lifted_op
        op = LinOp(inner.in_dim, inner.out_dim, lambda x: scaled * inner.apply(x),
                   lambda v: inner.adjoint(scaled * v), inner.norm_bound, "direct")
    else:
        op = make_block_weighting(lay_d) @ model.F
    if model.lifted_norm is not None:
        scale = float(np.max(weights / lay.weights))
        op = op.with_norm_bound(model.lifted_norm * scale)
    return op, proj


def restore(z, mask, A: LinOp, model: ConstraintModel, box=BOX,
            config: SolverConfig = SolverConfig(), method="epigraphical",
            ground_truth=None, shape=None, num_threads=1):
    """Solve the constrained least-squares restoration problem.

    Parameters
    ----------
    z, mask, A
        Observation, decimation mask and blur as returned by :func:`degrade`.
    model : ConstraintModel
    method : {"epigraphical", "direct"}
    ground_truth : ImageGrid, optional
        Enables the SNR and SSIM fields of the result.
    shape : (rows, cols), optional
        Needed only when ``ground_truth`` is absent.
    """
    z = np.asarray(z, dtype=float)
    D = make_decimation(mask)
    DA = D @ A
    n = A.in_dim
    lo, hi = box
    if ground_truth is not None:
        rows, cols = ground_truth.rows, ground_truth.cols
    elif shape is not None:
        rows, cols = shape
    else:
        raise ValueError("need ground_truth or shape")

    def value(x):
        r = DA.apply(x) - z
        return float(r @ r)

    def grad(x):
        return 2.0 * DA.adjoint(DA.apply(x) - z)

    lip = 2.0 * A.norm_bound ** 2
    x0 = DA.adjoint(z)

    def clip(x):
        return np.clip(x, lo, hi)

    t0 = time.perf_counter()
    if method == "epigraphical":
        sc = SplitConstraint(model.F, model.constraint, model.label, model.lifted_norm,
                             model.lifted_op)
        prob = build_split_problem(n, grad, lip, value, clip, x0, split=[sc], num_threads=num_threads)
        w, trace = solve(prob, config)
        x = w[:n]
    elif method == "direct":
        op, proj = _direct_projector(model)
        prob = SolverProblem(SmoothTerm(grad, lip, value), clip,
                             [DualTerm(op, proj, model.label)], n, clip(x0))
        x, trace = solve(prob, config)
    else:
        raise ValueError(f"unknown method {method!r}")
    wall = time.perf_counter() - t0

    _, viol = check_membership(model.constraint, model.F.apply(x))
    img = ImageGrid(rows, cols, x)
    res = RestoredResult(img, None, None, trace, value(x), float(viol), model.eta, wall)
    if ground_truth is not None:
        res.snr_db = snr_db(ground_truth.pixels, x)
        res.ssim = ssim(ground_truth.array, img.array)
    return res


def estimate_weights(z, mask, A, nltv: NltvSpec, tv_eta, shape,
                     config: SolverConfig = SolverConfig()):
    """Two-step weights: an l2-TV restoration, then patch similarity on it.

    Returns ``(graph, first_step_result)``.
    """
    rows, cols = shape
    tv = build_tv_constraint(rows, cols, "2", tv_eta)
    first = restore(z, mask, A, tv, config=config, shape=shape)
    return nltv_weights(first.image, nltv), first


# ---------------------------------------------------------------------------
# images

def synthetic_textured(size=64):
    """Deterministic test image: flat shapes, a stripe texture, a ramp."""
    r, c = np.mgrid[0:size, 0:size].astype(float) / size
    img = 40.0 + 60.0 * c
    img[(r - 0.3) ** 2 + (c - 0.3) ** 2 < 0.04] = 200.0
    sq = (r > 0.55) & (r < 0.9) & (c > 0.1) & (c < 0.45)
    img[sq] = 120.0 + 50.0 * np.sign(np.sin(2 * np.pi * 6 * (r[sq] + c[sq])))
    tri = (c > 0.55) & (r > 0.5) & (r - 0.5 > 0.95 - c)
    img[tri] = 230.0
    band = (c > 0.6) & (c < 0.95) & (r > 0.08) & (r < 0.4)
    img[band] = 150.0 + 60.0 * np.sin(2 * np.pi * 4 * c[band]) * np.cos(2 * np.pi * 3 * r[band])
    return ImageGrid.from_array(np.clip(np.round(img), 0, 255))


def synthetic_blocks(size=16):
    """Small piecewise-constant image."""
    img = np.full((size, size), 50.0)
    h = size // 2
    img[:h, h:] = 200.0
    img[h:, :h] = 120.0
    img[h // 2:h + h // 2, h // 2:h + h // 2] = 180.0
    return ImageGrid.from_array(img)


def read_pgm(path):
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    arr = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=pos)
    return ImageGrid.from_array(arr.reshape(rows, cols).astype(float))


def write_pgm(path, img: ImageGrid):
    arr = np.clip(np.round(img.array), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.cols} {img.rows}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_csv_image(path):
    return ImageGrid.from_array(np.loadtxt(path, delimiter=",", ndmin=2))


def write_csv_image(path, img: ImageGrid):
    arr = np.clip(np.round(img.array), 0, 65535).astype(np.uint16)
    np.savetxt(path, arr, fmt="%d", delimiter=",")


def load_image(ref, base_dir=None):
    """``synthetic:textured64``, ``synthetic:blocks16`` or a .pgm/.csv path."""
    if ref.startswith("synthetic:"):
        name = ref.split(":", 1)[1]
        if name.startswith("textured"):
            return synthetic_textured(int(name[len("textured"):] or 64))
        if name.startswith("blocks"):
            return synthetic_blocks(int(name[len("blocks"):] or 16))
        raise ValueError(f"unknown synthetic image {name!r}")
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    if path.suffix.lower() == ".csv":
        return read_csv_image(path)
    return read_pgm(path)


# ---------------------------------------------------------------------------
# experiment config

CONSTRAINT_TYPES = ("tv2", "tvinf", "nltv2", "nltvinf")


def _tv_reference(v):
    if v not in ("original", "zero_filled"):
        raise ValueError("constraint.tv_eta_reference must be 'original' or 'zero_filled'")
    return v


@dataclass(frozen=True)
class RestorationConfig:
    image: str = "synthetic:textured64"
    degradation: DegradationSpec = DegradationSpec()
    constraint_type: str = "tv2"
    eta_factor: float = 0.56
    tv_eta_factor: float = 0.56
    tv_eta_reference: str = "zero_filled"
    nltv: NltvSpec = NltvSpec()
    solver: SolverConfig = SolverConfig()
    seed: int = 0

    @classmethod
    def from_dict(cls, d, seed=None):
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        seed = int(d.get("seed", 0) if seed is None else seed)
        deg = dict(d.get("degradation", {}))
        deg.setdefault("seed", seed)
        con = dict(d.get("constraint", {}))
        ctype = con.get("type", "tv2")
        if ctype not in CONSTRAINT_TYPES:
            raise ValueError(f"constraint.type must be one of {CONSTRAINT_TYPES}")
        nl = dict(con.get("nltv", {}))
        nl["p"] = "inf" if ctype.endswith("inf") else "2"
        sol = dict(d.get("solver", {}))
        sol.setdefault("seed", seed)
        known = {"stop_rel", "max_iters", "gamma_fraction", "epsilon_margin", "seed", "trace_every"}
        bad = set(sol) - known
        if bad:
            raise ValueError(f"unknown solver keys {sorted(bad)}")
        return cls(
            image=str(d.get("image", "synthetic:textured64")),
            degradation=DegradationSpec(**deg),
            constraint_type=ctype,
            eta_factor=float(con.get("eta_factor", 0.56)),
            tv_eta_factor=float(con.get("tv_eta_factor", 0.56)),
            tv_eta_reference=_tv_reference(con.get("tv_eta_reference", "zero_filled")),
            nltv=NltvSpec(**nl),
            solver=SolverConfig(**sol),
            seed=seed,
        )

    @classmethod
    def load(cls, path, seed=None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), seed=seed)


def run_experiment(cfg: RestorationConfig, method="epigraphical", base_dir=None, num_threads=1):
    """Degrade the configured image, build the constraint and restore.

    Bounds are ``eta_factor`` times the constraint value of the original
    image; for non-local constraints the weights come from the two-step
    procedure with an l2-TV first step at ``tv_eta_factor`` times the l2-TV
    of the zero-filled observation (the default, available without ground
    truth) or, with ``tv_eta_reference="original"``, of the original image.
    """
    truth = load_image(cfg.image, base_dir)
    z, mask, A = degrade(truth, cfg.degradation)
    shape = (truth.rows, truth.cols)
    ctype = cfg.constraint_type
    first = None
    if ctype.startswith("tv"):
        model = build_tv_constraint(*shape, ctype[2:], 0.0)
    else:
        ref = truth.pixels if cfg.tv_eta_reference == "original" else zero_filled(z, mask)
        tv_eta = cfg.tv_eta_factor * build_tv_constraint(*shape, "2", 0.0).value(ref)
        graph, first = estimate_weights(z, mask, A, cfg.nltv, tv_eta, shape, cfg.solver)
        model = build_nltv_constraint(graph, ctype[4:], 0.0)
    model = model.with_eta(cfg.eta_factor * model.value(truth.pixels))
    res = restore(z, mask, A, model, config=cfg.solver, method=method,
                  ground_truth=truth, num_threads=num_threads)
    res.extra["zero_filled_snr_db"] = snr_db(truth.pixels, zero_filled(z, mask))
    if first is not None:
        res.extra["first_step_iters"] = first.iters
    return res
