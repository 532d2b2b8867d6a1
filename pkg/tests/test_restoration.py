import json

import numpy as np
import pytest

from epiprox.constraints import check_membership
from epiprox.operators import ImageGrid
from epiprox.restoration import (DegradationSpec, NltvGraph, NltvSpec, RestorationConfig,
                                 build_nltv_constraint, build_tv_constraint, degrade, load_image,
                                 nltv_weights, read_csv_image, read_pgm, restore, run_experiment,
                                 snr_db, ssim, synthetic_blocks, synthetic_textured,
                                 write_csv_image, write_pgm, zero_filled)
from epiprox.solver import SolverConfig


def test_degrade_examples():
    img = synthetic_blocks(10)
    z, mask, A = degrade(img, DegradationSpec(blur_size=1, keep_fraction=1.0, noise_sigma=0.0))
    assert np.array_equal(z, img.pixels) and mask.all()
    z, mask, _ = degrade(img, DegradationSpec(keep_fraction=0.4, seed=3))
    assert z.size == 40 and mask.sum() == 40
    z2, mask2, _ = degrade(img, DegradationSpec(keep_fraction=0.4, seed=3))
    assert np.array_equal(z, z2) and np.array_equal(mask, mask2)
    assert np.array_equal(zero_filled(z, mask)[mask], z)


def test_tv_examples():
    m = build_tv_constraint(2, 2, "2", 0.0)
    x = np.array([0.0, 1.0, 0.0, 1.0])
    assert abs(m.value(x) - 4.0) <= 1e-12
    ok, v = check_membership(m.with_eta(4.0).constraint, m.F.apply(x))
    assert ok and abs(v) <= 1e-12
    const = np.full(16, 42.0)
    for p in ("2", "inf"):
        mm = build_tv_constraint(4, 4, p, 0.0)
        assert mm.value(const) == 0.0
    with pytest.raises(ValueError):
        build_tv_constraint(1, 4, "2", 1.0)


def _uniform_graph(rows, cols, offsets):
    n = rows * cols
    nb = np.tile(np.arange(len(offsets)), (n, 1))
    return NltvGraph(rows, cols, tuple(offsets), nb, np.ones(nb.shape))


def test_nltv_reduces_to_tv(rng):
    x = rng.uniform(0, 255, 30)
    tv = build_tv_constraint(5, 6, "2", 0.0)
    nl = build_nltv_constraint(_uniform_graph(5, 6, [(0, 1), (1, 0)]), "2", 0.0)
    assert abs(nl.value(x) - tv.value(x)) <= 1e-9 * tv.value(x)
    # single neighbour: anisotropic TV in that direction
    one = build_nltv_constraint(_uniform_graph(5, 6, [(0, 1)]), "inf", 0.0)
    img = x.reshape(5, 6)
    assert abs(one.value(x) - np.abs(img - np.roll(img, -1, axis=1)).sum()) <= 1e-9 * one.value(x)


def test_nltv_lifted_op_matches_gather(rng):
    x = rng.uniform(0, 255, 64)
    g = nltv_weights(ImageGrid(8, 8, x), NltvSpec(window=5, patch=3, max_neighbors=6))
    for p in ("2", "inf"):
        m = build_nltv_constraint(g, p, 1.0)
        ref = m.layout.lift(m.F.apply(x))
        assert np.allclose(m.lifted_op.apply(x), ref, atol=1e-10)
        u = rng.normal(size=64)
        assert np.linalg.norm(m.lifted_op.apply(u)) <= m.lifted_norm * np.linalg.norm(u) * (1 + 1e-8)


def test_nltv_weights_constant_image():
    spec = NltvSpec(window=5, patch=3, max_neighbors=7)
    g = nltv_weights(ImageGrid(6, 6, np.full(36, 10.0)), spec)
    assert g.neighbors.shape == (36, 7)
    assert np.allclose(g.weights, 1.0 / 7.0)
    assert all((0, 0) != q for q in g.offsets)


def test_nltv_weights_prefer_similar_patches():
    img = np.zeros((12, 12))
    img[:, ::2] = 100.0  # vertical stripes of period 2
    g = nltv_weights(ImageGrid.from_array(img), NltvSpec(window=5, patch=3, max_neighbors=4))
    kept = {g.offsets[j] for j in g.neighbors[0]}
    assert all(q[1] % 2 == 0 for q in kept)


def test_spec_validation():
    with pytest.raises(ValueError):
        NltvSpec(window=4)
    with pytest.raises(ValueError):
        NltvSpec(max_neighbors=200)
    with pytest.raises(ValueError):
        DegradationSpec(blur_size=2)
    with pytest.raises(ValueError):
        DegradationSpec(keep_fraction=0.0)


def test_metrics():
    a = synthetic_textured(32).array
    assert ssim(a, a) == 1.0
    assert snr_db(a, a) == 300.0
    c = 3.0
    expect = 10 * np.log10(np.sum(a ** 2) / (a.size * c * c))
    assert abs(snr_db(a, a + c) - expect) <= 1e-12
    rng = np.random.default_rng(0)
    b = a + rng.normal(0, 20, a.shape)
    s = ssim(a, b)
    assert -1 <= s < 1 and abs(s - ssim(b, a)) <= 1e-12
    with pytest.raises(ValueError):
        ssim(a, a[:-1])


def test_restore_undegraded_recovers_image():
    truth = synthetic_blocks(8)
    z, mask, A = degrade(truth, DegradationSpec(blur_size=1, keep_fraction=1.0, noise_sigma=0.0))
    model = build_tv_constraint(8, 8, "2", 1e9)
    res = restore(z, mask, A, model, config=SolverConfig(max_iters=5000, stop_rel=1e-10), ground_truth=truth)
    assert np.linalg.norm(res.image.pixels - truth.pixels) <= 1e-3 * np.linalg.norm(truth.pixels)


@pytest.mark.parametrize("method", ["epigraphical", "direct"])
def test_restore_zero_budget_gives_constant(method):
    truth = synthetic_blocks(8)
    z, mask, A = degrade(truth, DegradationSpec(noise_sigma=0.0, seed=2))
    model = build_tv_constraint(8, 8, "2", 0.0)
    res = restore(z, mask, A, model, config=SolverConfig(max_iters=20000, stop_rel=1e-9),
                  method=method, shape=(8, 8))
    px = res.image.pixels
    assert np.ptp(px) <= 1e-3 * max(1.0, px.mean())
    assert res.snr_db is None


@pytest.mark.parametrize("ctype", ["tv2", "tvinf", "nltv2", "nltvinf"])
def test_restore_invariants_small(ctype):
    cfg = RestorationConfig.from_dict({
        "image": "synthetic:blocks16",
        "degradation": {"noise_sigma": 5.0},
        "constraint": {"type": ctype, "eta_factor": 0.8, "tv_eta_factor": 0.8,
                       "nltv": {"window": 5, "patch": 3, "max_neighbors": 6}},
        "solver": {"stop_rel": 1e-8, "max_iters": 20000},
        "seed": 1,
    })
    res = run_experiment(cfg)
    px = res.image.pixels
    assert px.min() >= -1e-8 and px.max() <= 255 + 1e-8
    assert res.violation <= 1e-4 * res.eta
    assert res.converged
    assert res.snr_db > res.extra["zero_filled_snr_db"]


def test_tv_eta_reference_option():
    base = {"image": "synthetic:blocks16", "constraint": {"type": "nltv2", "tv_eta_reference": "original"}}
    assert RestorationConfig.from_dict(base).tv_eta_reference == "original"
    assert RestorationConfig.from_dict({"constraint": {"type": "nltv2"}}).tv_eta_reference == "zero_filled"
    base["constraint"]["tv_eta_reference"] = "other"
    with pytest.raises(ValueError):
        RestorationConfig.from_dict(base)


def test_config_errors():
    with pytest.raises(ValueError):
        RestorationConfig.from_dict({"constraint": {"type": "tv3"}})
    with pytest.raises(ValueError):
        RestorationConfig.from_dict({"solver": {"stop": 1}})
    with pytest.raises(ValueError):
        RestorationConfig.from_dict([1, 2])
    cfg = RestorationConfig.from_dict({"seed": 4})
    assert cfg.degradation.seed == 4 and cfg.solver.seed == 4
    assert RestorationConfig.from_dict({"seed": 4}, seed=9).degradation.seed == 9


def test_image_io_round_trip(tmp_path):
    img = synthetic_textured(16)
    write_pgm(tmp_path / "a.pgm", img)
    back = read_pgm(tmp_path / "a.pgm")
    assert np.array_equal(back.pixels, img.pixels)
    write_csv_image(tmp_path / "a.csv", img)
    assert np.array_equal(read_csv_image(tmp_path / "a.csv").pixels, img.pixels)
    assert np.array_equal(load_image("a.pgm", tmp_path).pixels, img.pixels)
    assert load_image("synthetic:blocks12").rows == 12
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")


def test_shipped_image_matches_generator():
    shipped = load_image("synthetic:textured64")
    from pathlib import Path

    import epiprox
    data = read_pgm(Path(epiprox.__file__).parent / "data" / "textured64.pgm")
    assert np.array_equal(shipped.pixels, data.pixels)


def test_config_load(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"constraint": {"type": "tvinf", "eta_factor": 0.5}}))
    cfg = RestorationConfig.load(path)
    assert cfg.constraint_type == "tvinf" and cfg.eta_factor == 0.5
