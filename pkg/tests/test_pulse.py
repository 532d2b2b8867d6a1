import numpy as np
import pytest

from epiprox.pulse import (PulseInfeasible, PulseSpec, build_index_sets, design_pulse,
                           mask_excess_sum, min_norm_feasible, resolve_defaults, spectrum_report)
from epiprox.solver import SolverConfig


def test_index_sets_default_grid():
    spec = PulseSpec()
    s = build_index_sets(spec)
    assert spec.fs / spec.N == 5.0
    assert s.D1[0] == 61 and s.D1[-1] == 256 and s.D1.size == 196
    assert np.array_equal(s.D2, np.arange(0, 257, 10))
    c = spec.center
    # zero crossings every 8 samples inside the 128-sample support
    inside = s.D3[np.abs(s.D3 - c) <= 64]
    assert np.array_equal(np.sort(np.abs(inside - c)), np.repeat(8 * np.arange(1, 9), 2))
    assert np.all(np.isin(c + np.arange(65, c), s.D3))
    assert c not in s.D3
    # symmetric about the centre
    assert set((2 * c - s.D3) % spec.N) <= set(s.D3) | {0}


def test_mask_above_nyquist_empties_d1():
    s = build_index_sets(PulseSpec(mask_above_hz=1280.0))
    assert s.D1.size == 0


def test_incommensurate_grid_names_admissible_n():
    with pytest.raises(ValueError, match="smallest admissible N is 256"):
        build_index_sets(PulseSpec(N=500))


def test_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(beta=0.5)
    with pytest.raises(ValueError):
        PulseSpec(N=511)
    with pytest.raises(ValueError):
        PulseSpec(epsilon=0.0)


def test_spectrum_report_examples(rng):
    spec = PulseSpec()
    rows = spectrum_report(np.zeros(spec.N), spec)
    assert len(rows) == spec.N and all(r[2] == 0.0 for r in rows)
    assert rows[1][1] == 5.0 and rows[-1][1] == -5.0
    x = rng.normal(size=spec.N)
    mags = np.array([r[2] for r in spectrum_report(x, spec)])
    assert abs(np.sum(mags ** 2) - x @ x) <= 1e-10 * (x @ x)


def test_min_norm_feasible_point():
    spec = PulseSpec()
    s = build_index_sets(spec)
    x, res, _ = min_norm_feasible(spec, s)
    assert res <= 1e-10
    assert x[spec.center] == 1.0 and np.all(x[s.D3] == 0.0)
    chi = np.fft.fft(x)[s.D2]
    assert np.max(np.abs(chi)) <= 1e-9


def test_energy_bound_below_minimum_is_infeasible():
    with pytest.raises(PulseInfeasible):
        resolve_defaults(PulseSpec(energy_mu=0.5))


@pytest.fixture(scope="module")
def default_design():
    return design_pulse(PulseSpec())


def test_default_design_constraints(default_design):
    x, rep = default_design
    spec = PulseSpec()
    s = build_index_sets(spec)
    c = spec.center
    assert abs(x[c] - 1.0) <= 1e-8
    assert np.max(np.abs(x[s.D3])) <= 1e-8
    assert np.max(np.abs(x[c - np.arange(1, c)] - x[c + np.arange(1, c)])) <= 1e-8
    assert rep.norm <= rep.mu * (1 + 1e-8)
    assert rep.mask_excess_sum <= rep.epsilon * (1 + 1e-4)
    assert rep.c1_active and rep.converged
    assert rep.residuals["C2"] <= 1e-6
    assert set(rep.to_dict()) >= {"objective", "residuals", "epsilon", "beta", "iters"}


def test_conjugate_symmetry(default_design):
    x, _ = default_design
    X = np.abs(np.fft.fft(x))
    N = x.size
    assert np.max(np.abs(X[1:] - X[1:][::-1])) <= 1e-10 * np.sqrt(N)


def test_restart_from_other_point_agrees(default_design):
    x, rep = default_design
    spec = PulseSpec()
    x2, rep2 = design_pulse(spec, x0=np.zeros(spec.N))
    assert abs(rep2.norm - rep.norm) <= 1e-5 * rep.norm


def test_huge_epsilon_flags_c1_inactive():
    spec = PulseSpec(epsilon=1e9)
    _, rep = design_pulse(spec)
    assert not rep.c1_active
    _, free = design_pulse(spec, include_c1=False)
    assert abs(rep.norm - free.norm) <= 1e-4 * free.norm


def test_beta_two_runs():
    spec = PulseSpec(beta=2.0)
    x, rep = design_pulse(spec, SolverConfig(max_iters=20000, stop_rel=1e-8))
    s = build_index_sets(spec)
    assert abs(mask_excess_sum(x, spec, s) - rep.mask_excess_sum) <= 1e-15
    assert rep.mask_excess_sum <= rep.epsilon * (1 + 1e-4)
