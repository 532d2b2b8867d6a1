import json

import numpy as np
import pytest
from helpers import random_layout_kinds

from epiprox import epigraph as epi
from epiprox.constraints import (BlockLayout, DecomposableConstraint, EpiState,
                                 alternating_projections, check_membership, constraint_from_dict,
                                 constraint_to_dict, init_zeta, split)
from epiprox.prox import project_halfspace


def _l2(sizes, eta, **kw):
    return DecomposableConstraint(BlockLayout.contiguous(sizes), epi.EuclideanNorm(1.0), eta, **kw)


def test_split_example():
    c = _l2([2], 5.0)
    hs, proj = split(c)
    assert hs.dim == 1 and hs.eta == 5.0 and not hs.equality
    out = proj(EpiState(np.array([3.0, 4.0]), np.array([0.0])))
    assert np.allclose(out.y, [1.5, 2.0]) and np.allclose(out.zeta, [2.5])


def test_split_identity_on_feasible(rng):
    sizes, kinds = random_layout_kinds(rng)
    c = DecomposableConstraint(BlockLayout.contiguous(sizes), kinds, 100.0)
    y = rng.uniform(-1, 1, sum(sizes))
    zeta = c.block_values(y) + 0.01
    hs, proj = split(c)
    if zeta.sum() <= c.eta:
        out = proj(EpiState(y, zeta))
        assert np.array_equal(out.y, y) and np.array_equal(out.zeta, zeta)
        assert np.array_equal(project_halfspace(hs, zeta), zeta)


def test_init_zeta_examples():
    assert np.array_equal(init_zeta(_l2([2, 2], 1.0), np.zeros(4)), [0.0, 0.0])
    assert np.allclose(init_zeta(_l2([2], 5.0), np.array([3.0, 0.0])), [3.0])
    c = DecomposableConstraint(BlockLayout.contiguous([1, 1]), epi.ScalarPower(1.0, 1.0), 2.0)
    assert np.allclose(init_zeta(c, np.array([4.0, -4.0])), [1.0, 1.0])


def test_check_membership_examples():
    ok, v = check_membership(_l2([2], 0.0), np.zeros(2))
    assert ok and v == 0.0
    ok, v = check_membership(_l2([2, 2], 4.0), np.array([3.0, 4.0, 0.0, 0.0]))
    assert not ok and abs(v - 1.0) <= 1e-15


def test_overlapping_blocks_are_lifted():
    lay = BlockLayout.from_blocks([[0, 1], [1, 2]], 3, weights=[[1.0, 1.0], [2.0, 2.0]])
    c = DecomposableConstraint(lay, epi.EuclideanNorm(1.0), 10.0)
    u = np.array([3.0, 4.0, 0.0])
    assert np.allclose(c.block_values(u), [5.0, 8.0])
    assert np.array_equal(c.lifting().apply(u), [3.0, 4.0, 8.0, 0.0])


def test_alternating_projections_reach_the_split_set(rng):
    c = _l2([2, 2], 4.0)
    u = np.array([3.0, 4.0, 0.0, 1.0])
    st = alternating_projections(c, EpiState(u, init_zeta(c, u)), iters=5000, tol=1e-14)
    assert c.value(st.y) <= c.eta + 1e-8
    assert np.all(c.stack.values(st.y) <= st.zeta + 1e-8)


def test_equality_variant():
    c = _l2([1, 1], 3.0, equality=True)
    z = init_zeta(c, np.array([0.5, 0.5]))
    assert np.isclose(z.sum(), 3.0)
    hs, _ = split(c)
    assert hs.equality


def test_validation():
    with pytest.raises(ValueError):
        _l2([2], -1.0)
    with pytest.raises(ValueError):
        DecomposableConstraint(BlockLayout.contiguous([2, 2]), [epi.EuclideanNorm()], 1.0)
    with pytest.raises(ValueError):
        BlockLayout(np.array([0, 1]), np.array([0, 2]), np.array([1.0, -1.0]), 2)
    with pytest.raises(ValueError):
        BlockLayout(np.array([0, 5]), np.array([0, 2]), np.ones(2), 2)
    with pytest.raises(ValueError):
        BlockLayout(np.array([0, 1]), np.array([0, 0, 2]), np.ones(2), 2)


def test_json_round_trip(rng):
    sizes, kinds = random_layout_kinds(rng, max_blocks=8)
    c = DecomposableConstraint(BlockLayout.contiguous(sizes), kinds, 3.5)
    d = json.loads(json.dumps(constraint_to_dict(c)))
    c2 = constraint_from_dict(d)
    u = rng.normal(size=sum(sizes))
    assert c2.eta == c.eta and c2.value(u) == c.value(u)
