import numpy as np
import pytest

from _util import degenerate_problem
from slmfg.fixedpoint import SolverConfig, dlvi
from slmfg.grid import GridSpec, q1_stencil
from slmfg.monotone import (
    PairedState,
    Residuals,
    a_delta_apply,
    monotonicity_gap,
    optimal_controls,
    pairing,
    pairing_naive,
    random_state,
    structural_terms,
    uniqueness_probe,
)
from slmfg.problem import target_aversion_1d


def small_instance(seed=0, lam=2.0):
    p = target_aversion_1d(lam=lam, horizon=0.3, domain=(-0.75, 0.75))
    g = p.grid(0.1, 0.1)
    rng = np.random.default_rng(seed)
    return p, g, random_state(g, rng), random_state(g, rng)


def test_small_instances_respect_the_size_limits():
    _, g, w, _ = small_instance()
    assert g.n_nodes <= 16 and g.n_time <= 4
    np.testing.assert_allclose(w.m.sum(axis=1), 1.0)


def test_solution_has_zero_residuals():
    p = degenerate_problem()
    g = p.grid(0.2)
    res = dlvi(g, p)
    R = a_delta_apply(g, p, PairedState(res.m, res.v), res.q)
    assert np.max(np.abs(R.r1)) < 1e-14 and np.max(np.abs(R.r2)) < 1e-14


def test_perturbing_one_value_touches_only_the_expected_residuals():
    p, g, w, _ = small_instance(1)
    q = optimal_controls(g, p, w.v)
    R = a_delta_apply(g, p, w, q)
    k0, i0, delta = 1, 7, 0.3
    v = w.v.copy()
    v[k0, i0] += delta
    Rp = a_delta_apply(g, p, PairedState(w.m, v), q)
    d1 = Rp.r1 - R.r1
    assert np.all(Rp.r2 == R.r2)
    # the own row loses delta
    assert d1[k0, i0] == pytest.approx(-delta)
    # the level below sees it through the Q1 weight of node i0 at each foot
    index, weight = q1_stencil(g, g.nodes - g.dt * q[k0 - 1])
    expected = delta * np.where(index == i0, weight, 0.0).sum(axis=-1)
    np.testing.assert_allclose(d1[k0 - 1], expected, atol=1e-14)
    others = np.ones_like(d1, dtype=bool)
    others[k0 - 1] = False
    others[k0, i0] = False
    assert np.all(np.abs(d1[others]) < 1e-14)


def test_static_density_under_moving_controls_has_transport_residuals():
    p, g, w, _ = small_instance(2)
    m = np.tile(w.m[0], (g.n_time, 1))
    q = np.full((g.n_steps, g.n_nodes, 1), 0.5)
    R = a_delta_apply(g, p, PairedState(m, w.v), q)
    assert np.max(np.abs(R.r2)) > 1e-3


def test_pairing_matches_the_naive_double_sum():
    rng = np.random.default_rng(3)
    n, levels = 5, 3
    R = Residuals(rng.normal(size=(levels - 1, n)), rng.normal(size=(levels - 1, n)), None)
    z = PairedState(rng.normal(size=(levels, n)), rng.normal(size=(levels, n)))
    assert pairing(R, z) == pytest.approx(pairing_naive(R, z), abs=1e-13)


def test_pairing_is_bilinear():
    rng = np.random.default_rng(4)
    R = Residuals(rng.normal(size=(2, 4)), rng.normal(size=(2, 4)), None)
    S = Residuals(rng.normal(size=(2, 4)), rng.normal(size=(2, 4)), None)
    z = PairedState(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
    comb = Residuals(2 * R.r1 - S.r1, 2 * R.r2 - S.r2, None)
    assert pairing(comb, z) == pytest.approx(2 * pairing(R, z) - pairing(S, z), abs=1e-12)


def test_pairing_against_a_solution_residual_is_zero():
    p = degenerate_problem()
    g = p.grid(0.2)
    res = dlvi(g, p)
    R = a_delta_apply(g, p, PairedState(res.m, res.v), res.q)
    z = random_state(g, np.random.default_rng(5))
    assert abs(pairing(R, z)) < 1e-13


def test_gap_vanishes_for_identical_states():
    p, g, w, _ = small_instance(6)
    assert monotonicity_gap(g, p, w, w) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_gap_equals_its_structural_terms_and_is_nonnegative(seed):
    p, g, w, wt = small_instance(seed, lam=0.5 + 0.25 * seed)
    q, qt = optimal_controls(g, p, w.v), optimal_controls(g, p, wt.v)
    gap = monotonicity_gap(g, p, w, wt, q=q, qt=qt)
    t1, t2, t3 = structural_terms(g, p, w, wt, q, qt)
    assert gap == pytest.approx(t1 + t2 + t3, abs=1e-10)
    assert min(t1, t2, t3) >= -1e-12
    assert gap >= -1e-10


def test_gap_is_symmetric_in_the_two_states():
    p, g, w, wt = small_instance(11)
    assert monotonicity_gap(g, p, w, wt) == pytest.approx(monotonicity_gap(g, p, wt, w), abs=1e-12)


def test_random_states_are_valid():
    g = GridSpec(2, 0.25, 0.1, 0.3, (-1.0, -1.0), (1.0, 1.0))
    w = random_state(g, np.random.default_rng(0))
    assert w.m.shape == w.v.shape == (g.n_time, g.n_nodes)
    assert np.all(w.m >= 0)
    np.testing.assert_allclose(w.m.sum(axis=1), 1.0)


def test_equilibrium_does_not_depend_on_the_starting_path():
    p = target_aversion_1d(horizon=0.5, domain=(-0.75, 0.75))
    g = p.grid(0.1, 0.1)
    e1, einf = uniqueness_probe(g, p, SolverConfig(tol=1e-6, max_iter=2000), seed=1)
    assert e1 < 1e-3 and einf < 1e-3
