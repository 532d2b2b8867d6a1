import numpy as np
import pytest

from epiprox import ballproj, oracles
from epiprox.constraints import BlockLayout


def _blocks(off):
    return list(zip(off[:-1], off[1:]))


def test_l12_examples():
    off = np.array([0, 2, 4])
    y = np.array([3.0, 4.0, 0.0, 0.0])
    assert np.allclose(ballproj.project_l12_ball(off, 2.0, y), [1.2, 1.6, 0.0, 0.0])
    assert np.array_equal(ballproj.project_l12_ball(off, 10.0, y), y)
    lay = BlockLayout.contiguous([2, 2])
    assert np.allclose(ballproj.project_l12_ball(lay, 2.0, y), [1.2, 1.6, 0.0, 0.0])


def test_l1inf_examples():
    assert np.allclose(ballproj.project_l1inf_ball([0, 2], 2.0, np.array([3.0, 1.0])), [2.0, 1.0])
    y = np.array([1.0, -0.5, 0.25])
    assert np.array_equal(ballproj.project_l1inf_ball([0, 1, 3], 5.0, y), y)
    p, info = ballproj.project_l1inf_ball([0, 2], 2.0, np.array([3.0, 1.0]), return_info=True)
    assert info["iters"] >= 1 and info["lambda"] > 0


def test_zero_radius():
    y = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(ballproj.project_l12_ball([0, 1, 3], 0.0, y), np.zeros(3))
    assert np.allclose(ballproj.project_l1inf_ball([0, 1, 3], 0.0, y), 0.0, atol=1e-9)
    with pytest.raises(ValueError):
        ballproj.project_l12_ball([0, 3], -1.0, y)


def _random(rng):
    sizes = rng.integers(1, 5, size=rng.integers(1, 4))
    off = np.concatenate([[0], np.cumsum(sizes)])
    return off, rng.uniform(-5, 5, off[-1]), rng.uniform(0, 6)


def test_oracle_and_feasibility(rng):
    for _ in range(300):
        off, y, eta = _random(rng)
        if off[-1] > 8:
            continue
        p2 = ballproj.project_l12_ball(off, eta, y)
        pi = ballproj.project_l1inf_ball(off, eta, y)
        assert np.linalg.norm(p2 - oracles.l12_ball(off, eta, y)) <= 1e-6
        assert np.linalg.norm(pi - oracles.l1inf_ball(off, eta, y)) <= 1e-6
        assert sum(np.linalg.norm(p2[a:b]) for a, b in _blocks(off)) <= eta * (1 + 1e-8)
        assert sum(np.abs(pi[a:b]).max() for a, b in _blocks(off)) <= eta * (1 + 1e-8)


@pytest.mark.parametrize("which", ["l12", "l1inf"])
def test_projection_axioms(which, rng):
    fn = ballproj.project_l12_ball if which == "l12" else ballproj.project_l1inf_ball
    for _ in range(200):
        off, a, eta = _random(rng)
        b = rng.uniform(-5, 5, a.size)
        pa, pb = fn(off, eta, a), fn(off, eta, b)
        assert np.linalg.norm(fn(off, eta, pa) - pa) <= 1e-10 * (1 + np.linalg.norm(a))
        assert (pa - pb) @ (a - b) >= np.sum((pa - pb) ** 2) - 1e-9


def test_l1inf_matches_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    for _ in range(5):
        off, y, eta = _random(rng)
        u = cp.Variable(y.size)
        cons = [sum(cp.norm(u[a:b], "inf") for a, b in _blocks(off)) <= eta]
        cp.Problem(cp.Minimize(cp.sum_squares(u - y)), cons).solve()
        assert np.allclose(ballproj.project_l1inf_ball(off, eta, y), u.value, atol=1e-4)
