import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _util import make_problem
from slmfg.fixedpoint import dlvi, initial_path
from slmfg.grid import GridSpec, project_initial_density
from slmfg.hjb import solve_backward
from slmfg.problem import ConstantCoupling, PotentialCoupling, lq_gaussian, target_aversion_1d, target_aversion_2d
from slmfg.transport import ce_step, cost_functional, solve_forward


def line(n=9, dx=0.5, dt=0.25):
    return GridSpec(1, dx, dt, 1.0, (0.0,), ((n - 1) * dx,))


def test_zero_control_is_the_identity(grid2):
    m = np.random.default_rng(0).dirichlet(np.ones(grid2.n_nodes))
    out = ce_step(grid2, m, np.zeros((grid2.n_nodes, 2)))
    np.testing.assert_array_equal(out, m)


def test_node_landing_control_shifts_mass_one_cell():
    g = line()
    m = np.zeros(g.n_nodes)
    m[2:5] = [0.2, 0.5, 0.3]
    q = np.full((g.n_nodes, 1), -g.dx / g.dt)
    out = ce_step(g, m, q)
    np.testing.assert_allclose(out[3:6], [0.2, 0.5, 0.3], atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-15)


def test_half_cell_control_splits_mass_evenly():
    g = line()
    m = np.zeros(g.n_nodes)
    m[4] = 1.0
    out = ce_step(g, m, np.full((g.n_nodes, 1), -g.dx / (2 * g.dt)))
    np.testing.assert_allclose(out[[4, 5]], [0.5, 0.5])
    assert out.sum() == 1.0


def test_clamped_feet_keep_mass_on_the_boundary():
    g = line()
    m = np.zeros(g.n_nodes)
    m[-1] = 1.0
    stats = {}
    out = ce_step(g, m, np.full((g.n_nodes, 1), -10.0), stats=stats)
    assert out[-1] == 1.0
    assert stats["clamped_mass_events"] == 1


@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2]))
def test_random_controls_conserve_mass(seed, dim):
    rng = np.random.default_rng(seed)
    g = GridSpec(dim, 0.3, 0.2, 0.6, (-1.0,) * dim, (1.0,) * dim)
    q = rng.uniform(-3, 3, size=(g.n_steps, g.n_nodes, dim))
    m = solve_forward(g, q, rng.dirichlet(np.ones(g.n_nodes)))
    assert np.all(m >= 0)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_step_is_the_adjoint_of_interpolation(seed):
    from slmfg.grid import interpolate

    rng = np.random.default_rng(seed)
    g = GridSpec(2, 0.4, 0.3, 0.6, (-1.0, -1.0), (1.0, 1.0))
    q = rng.uniform(-2, 2, size=(g.n_nodes, 2))
    m, W = rng.random(g.n_nodes), rng.normal(size=g.n_nodes)
    lhs = ce_step(g, m, q) @ W
    rhs = m @ interpolate(g, W, g.nodes - g.dt * q)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_step_is_linear_in_the_density():
    g = line()
    rng = np.random.default_rng(1)
    q = rng.uniform(-2, 2, size=(g.n_nodes, 1))
    a, b = rng.random(g.n_nodes), rng.random(g.n_nodes)
    np.testing.assert_allclose(ce_step(g, 2 * a + 3 * b, q), 2 * ce_step(g, a, q) + 3 * ce_step(g, b, q))


def test_zero_control_path_is_constant_in_time(grid1):
    m0 = np.array([0.1, 0.2, 0.3, 0.4, 0.0])
    m = solve_forward(grid1, np.zeros((grid1.n_steps, grid1.n_nodes, 1)), m0)
    assert m.shape == (grid1.n_time, grid1.n_nodes)
    np.testing.assert_array_equal(m, np.tile(m0, (grid1.n_time, 1)))


@pytest.mark.slow
def test_support_stays_in_the_reachable_ball():
    """The terminal support of the 1-D aversion equilibrium stays inside ``B(0, R1 + T C_H)``."""
    p = target_aversion_1d(horizon=1.0)
    g = p.grid(0.05)
    res = dlvi(g, p)
    m0 = project_initial_density(g, p.m0)
    r1 = np.max(np.abs(g.nodes[m0 > 0]))
    support = np.abs(g.nodes[res.m[-1] > 0, 0])
    assert support.max() <= r1 + p.horizon * p.control_bound + g.dx


# --- cost functional --------------------------------------------------------------------

def test_cost_of_a_free_game_is_zero():
    p = make_problem(L=lambda x, a: np.zeros(len(a)), center=None)
    g = p.grid(0.2)
    q = np.random.default_rng(0).uniform(-2, 2, size=(g.n_steps, g.n_nodes, 1))
    assert cost_functional(g, p, initial_path(g, p), q) == 0.0


def test_cost_by_hand_on_three_nodes():
    # nodes 0, 1, 2; two steps of dt = 1; all mass at node 0, moving right one cell per step
    F = PotentialCoupling(lambda x: x[:, 0])  # running cost = position
    p = make_problem(F=F, G=PotentialCoupling(lambda x: 10.0 * x[:, 0]), bound=2.0, horizon=2.0,
                     domain=(0.0, 2.0))
    g = GridSpec(1, 1.0, 1.0, 2.0, (0.0,), (2.0,))
    q = np.full((2, 3, 1), -1.0)
    m = np.zeros((3, 3))
    m[0, 0] = 1.0
    # step 0 at x=0: L = 1/2, F = 0; step 1 at x=1: L = 1/2, F = 1; terminal at x=2: G = 20
    assert cost_functional(g, p, m, q) == pytest.approx(0.5 + 1.5 + 20.0)


@pytest.mark.parametrize("name,dx", [("lq", 0.1), ("aversion1d", 0.1), ("aversion2d", 0.2)])
def test_dynamic_programming_identity(name, dx):
    p = {"lq": lq_gaussian(), "aversion1d": target_aversion_1d(), "aversion2d": target_aversion_2d()}[name]
    g = p.grid(dx)
    m = initial_path(g, p)
    v, q = solve_backward(g, p, m)
    assert cost_functional(g, p, m, q) == pytest.approx(float(m[0] @ v[0]), abs=1e-8)


def test_optimal_feedback_beats_other_feedbacks():
    p = target_aversion_1d(horizon=1.0)
    g = p.grid(0.1)
    m = initial_path(g, p)
    v, q = solve_backward(g, p, m)
    best = cost_functional(g, p, m, q)
    rng = np.random.default_rng(5)
    for _ in range(5):
        other = np.clip(q + rng.normal(scale=0.5, size=q.shape), -6, 6)
        assert cost_functional(g, p, m, other) >= best - 1e-12


def test_constant_terminal_cost_only():
    p = make_problem(L=lambda x, a: np.zeros(len(a)), center=None, G=ConstantCoupling(0.7))
    g = p.grid(0.2)
    q = np.zeros((g.n_steps, g.n_nodes, 1))
    assert cost_functional(g, p, initial_path(g, p), q) == pytest.approx(0.7)
