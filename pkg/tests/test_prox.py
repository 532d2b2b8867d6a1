import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiprox import oracles
from epiprox.prox import (Box, HalfSpace, PowerProxParams, power_root_residual, project_box,
                          project_halfspace, project_l1_ball, project_l2_ball, prox_power_max_sq)


@pytest.mark.parametrize("tau,beta,zeta,y,expected", [
    (1.0, 1.0, -1.0, 3.0, 1.0),
    (1.0, 1.0, 2.0, 1.0, 1.0),
    (1.0, 2.0, 0.0, 3.0, 1.0),
])
def test_prox_examples(tau, beta, zeta, y, expected):
    assert abs(prox_power_max_sq(PowerProxParams(tau, beta, zeta), y) - expected) <= 1e-12


def test_prox_matches_bruteforce(rng):
    for _ in range(40):
        t, b = rng.uniform(0.2, 3), rng.choice([1.0, 1.5, 2.0, 3.0])
        z, y = rng.uniform(-5, 5), rng.uniform(-10, 10)
        ref = oracles.scalar_prox_bruteforce(t, b, z, y)
        assert abs(prox_power_max_sq(PowerProxParams(t, b, z), y) - ref) <= 1e-6


def test_prox_array_shape_and_validation():
    prm = PowerProxParams(1.0, 2.0, 0.5)
    y = np.linspace(-3, 3, 12).reshape(3, 4)
    assert prox_power_max_sq(prm, y).shape == (3, 4)
    assert isinstance(prox_power_max_sq(prm, 2.0), float)
    with pytest.raises(ValueError):
        PowerProxParams(0.0, 1.0)
    with pytest.raises(ValueError):
        PowerProxParams(1.0, 0.5)


def _phi_grad(t, b, z, u):
    g = t * abs(u) ** b - z
    if g <= 0:
        return 0.0
    return g * t * b * abs(u) ** (b - 1) * np.sign(u)


def test_prox_subdifferential_characterization(rng):
    # where phi is differentiable, y - p equals its gradient at p
    for _ in range(300):
        t, b, z = rng.uniform(0.2, 3), rng.choice([1.5, 2.0, 3.0]), rng.uniform(-5, 5)
        y = rng.uniform(-10, 10)
        p = prox_power_max_sq(PowerProxParams(t, b, z), y)
        h = 1e-6
        fd = (0.5 * max(t * abs(p + h) ** b - z, 0) ** 2 - 0.5 * max(t * abs(p - h) ** b - z, 0) ** 2) / (2 * h)
        assert abs((y - p) - _phi_grad(t, b, z, p)) <= 1e-9 * (1 + abs(y))
        assert abs((y - p) - fd) <= 1e-4 * (1 + abs(y))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5), st.sampled_from([1.0, 1.25, 2.0, 4.0]), st.floats(-10, 10),
       st.lists(st.floats(-50, 50), min_size=2, max_size=20))
def test_prox_odd_and_monotone(tau, beta, zeta, ys):
    prm = PowerProxParams(tau, beta, zeta)
    y = np.sort(np.array(ys))
    p = prox_power_max_sq(prm, y)
    assert np.array_equal(prox_power_max_sq(prm, -y), -p)
    assert np.all(np.diff(p) >= 0)


def test_root_residual_branches():
    prm = PowerProxParams(1.0, 1.0, -5.0)
    # beta = 1 clamp branch: |y| + tau*zeta <= 0
    assert prox_power_max_sq(prm, 2.0) == 0.0
    assert power_root_residual(prm, 2.0, 0.0) == 0.0
    keep = PowerProxParams(2.0, 2.0, 10.0)
    assert prox_power_max_sq(keep, 1.5) == 1.5
    assert power_root_residual(keep, 1.5, 1.5) == 0.0


def test_box_and_halfspace_examples():
    assert np.array_equal(project_box(Box(0, 255), np.array([-3.0, 100.0, 300.0])), [0, 100, 255])
    x = np.array([1.0, 2.0])
    assert np.array_equal(project_box(Box(0, 255), x), x)
    assert np.allclose(project_halfspace(HalfSpace(2, 2.0), np.array([2.0, 2.0])), [1.0, 1.0])
    assert np.array_equal(project_halfspace(HalfSpace(2, 5.0), np.array([1.0, 1.0])), [1.0, 1.0])
    eq = project_halfspace(HalfSpace(2, 5.0, equality=True), np.array([1.0, 1.0]))
    assert np.allclose(eq, [2.5, 2.5])
    with pytest.raises(ValueError):
        Box(1, 0)
    with pytest.raises(ValueError):
        HalfSpace(0, 1.0)


def test_ball_examples():
    assert np.allclose(project_l2_ball(1.0, np.array([3.0, 4.0])), [0.6, 0.8])
    assert np.array_equal(project_l2_ball(10.0, np.array([3.0, 4.0])), [3.0, 4.0])
    assert np.allclose(project_l1_ball(2.0, np.array([3.0, 1.0])), [2.0, 0.0])
    assert np.array_equal(project_l1_ball(5.0, np.array([3.0, -1.0])), [3.0, -1.0])


def _set_projectors():
    return {
        "box": lambda x: project_box(Box(-1.0, 2.0), x),
        "halfspace": lambda x: project_halfspace(HalfSpace(x.size, 1.5), x),
        "hyperplane": lambda x: project_halfspace(HalfSpace(x.size, 1.5, True), x),
        "l2 ball": lambda x: project_l2_ball(2.0, x),
        "l1 ball": lambda x: project_l1_ball(2.0, x),
    }


@pytest.mark.parametrize("name", list(_set_projectors()))
def test_projection_axioms(name, rng):
    P = _set_projectors()[name]
    for _ in range(200):
        a, b = rng.uniform(-5, 5, 6), rng.uniform(-5, 5, 6)
        pa, pb = P(a), P(b)
        assert np.linalg.norm(P(pa) - pa) <= 1e-10 * (1 + np.linalg.norm(a))
        assert (pa - pb) @ (a - b) >= np.sum((pa - pb) ** 2) - 1e-9


def test_l1_ball_matches_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    for _ in range(5):
        y = rng.normal(0, 3, 7)
        u = cp.Variable(7)
        cp.Problem(cp.Minimize(cp.sum_squares(u - y)), [cp.norm1(u) <= 2.5]).solve()
        assert np.allclose(project_l1_ball(2.5, y), u.value, atol=1e-5)
