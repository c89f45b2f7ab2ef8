import numpy as np
import pytest

from slmfg.grid import GridSpec, moment, project_initial_density
from slmfg.problem import (
    ConstantCoupling,
    MeanDistanceCoupling,
    ProblemConfig,
    TargetAversionCoupling,
    drift_field,
    lq_gaussian,
    running_cost,
    target_aversion_1d,
    target_aversion_2d,
    two_bump_density,
)


def point_mass(g, i):
    m = np.zeros(g.n_nodes)
    m[i] = 1.0
    return m


class TestLQ:
    def test_coupling_vanishes_at_the_mean(self):
        p = lq_gaussian()
        g = p.grid(0.1)
        m = project_initial_density(g, p.m0)
        mean = moment(g, m)
        assert p.F(np.array([[mean]]), m, g)[0] == pytest.approx(0.0, abs=1e-30)

    def test_coupling_against_a_point_mass(self):
        p = lq_gaussian()
        g = p.grid(0.1)
        m = point_mass(g, 25)
        y = g.nodes[25, 0]
        x = np.array([[0.3], [-1.0]])
        np.testing.assert_allclose(p.F(x, m, g), 0.5 * (x[:, 0] - y) ** 2)

    def test_nodal_matches_pointwise(self):
        p = lq_gaussian()
        g = p.grid(0.2)
        m = project_initial_density(g, p.m0)
        np.testing.assert_allclose(p.running_coupling(g, m), p.F(g.nodes, m, g))

    def test_feedback_is_the_identity(self):
        p = lq_gaussian()
        pts = np.linspace(-2, 2, 7)[:, None]
        grads = np.random.default_rng(0).normal(size=(7, 1))
        np.testing.assert_array_equal(p.DpH(pts, grads), grads)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            lq_gaussian(sigma0=0.0)


class TestTargetAversion:
    def test_truncation_far_from_the_target(self):
        g = GridSpec.uniform(1, 0.1, 1.0, -5.0, 5.0)
        h = TargetAversionCoupling(lam=2.0, target=0.0, truncation=9.0, sigma=0.5)
        m = point_mass(g, 0)  # mass at x = -5
        val = h(np.array([[4.5]]), m, g)[0]
        assert val == pytest.approx(2.0 * 9.0, abs=1e-12)

    def test_coupling_adds_the_smoothed_crowd(self):
        g = GridSpec.uniform(1, 0.1, 1.0, -3.0, 3.0)
        h = TargetAversionCoupling(lam=1.0, target=0.0)
        i = 30  # x = 0
        val = h(g.nodes[[i]], point_mass(g, i), g)[0]
        assert val == pytest.approx(1.0 / np.sqrt(2 * np.pi * 0.25))

    def test_pointwise_and_nodal_agree(self):
        p = target_aversion_2d()
        g = p.grid(0.2)
        m = project_initial_density(g, p.m0)
        np.testing.assert_allclose(p.F.nodal(g, m), p.F(g.nodes, m, g), atol=1e-12)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_bump_density_is_normalised(self, dim):
        m0 = two_bump_density(dim)
        n = 801 if dim == 1 else 401
        x = np.linspace(-2, 2, n)
        h = x[1] - x[0]
        if dim == 1:
            total = m0(x[:, None]).sum() * h
        else:
            X, Y = np.meshgrid(x, x, indexing="ij")
            total = m0(np.stack([X.ravel(), Y.ravel()], -1)).sum() * h * h
        assert total == pytest.approx(1.0, rel=1e-3)

    @pytest.mark.parametrize("dim,mass", [(1, 16 / 35), (2, np.pi / 16)])
    def test_bump_peaks_sit_at_the_centres(self, dim, mass):
        m0 = two_bump_density(dim)
        c = np.ones((1, dim))
        peak = 1.0 / (2 * mass)
        assert m0(c)[0] == pytest.approx(peak)
        assert m0(-c)[0] == pytest.approx(peak)
        assert m0(c * 0.9)[0] < peak

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            target_aversion_1d(lam=0.0)
        with pytest.raises(ValueError):
            target_aversion_2d(lam=-1.0)


class TestDrift:
    def test_lagrangian_vanishes_on_the_drift(self):
        p = target_aversion_2d()
        x = np.random.default_rng(2).uniform(-3, 3, size=(20, 2))
        b = drift_field(2.5)(x)
        np.testing.assert_allclose(p.L(x, b), 0.0, atol=1e-14)

    def test_feedback_at_zero_gradient_is_the_drift(self):
        p = target_aversion_2d()
        x = np.random.default_rng(3).uniform(-3, 3, size=(20, 2))
        np.testing.assert_allclose(p.DpH(x, np.zeros_like(x)), drift_field(2.5)(x))

    @pytest.mark.parametrize("variant", ["literal", "rotation"])
    def test_drift_vanishes_at_the_origin(self, variant):
        np.testing.assert_array_equal(drift_field(2.5, variant)(np.zeros((1, 2))), [[0.0, 0.0]])

    def test_variants_differ(self):
        x = np.array([[1.0, 2.0]])
        np.testing.assert_allclose(drift_field(1.0, "literal")(x), [[-2.0, 2.0]])
        np.testing.assert_allclose(drift_field(1.0, "rotation")(x), [[-2.0, 1.0]])

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            drift_field(1.0, "spiral")

    def test_quadratic_center_is_consistent_with_L(self):
        for p in (lq_gaussian(), target_aversion_1d(), target_aversion_2d()):
            x = np.random.default_rng(4).uniform(-2, 2, size=(30, p.dim))
            a = np.random.default_rng(5).uniform(-3, 3, size=(30, p.dim))
            b = p.quadratic_center(x)
            np.testing.assert_allclose(p.L(x, a), 0.5 * ((a - b) ** 2).sum(-1), atol=1e-13)


class TestRunningCost:
    def test_zero_control_zero_coupling(self):
        p = lq_gaussian()
        g = p.grid(0.1)
        object.__setattr__(p, "F", ConstantCoupling(0.0))
        assert running_cost(p, g, 10, 0.0, np.ones(g.n_nodes) / g.n_nodes) == 0.0

    def test_direct_substitution(self):
        p = lq_gaussian()
        g = GridSpec(1, 0.1, 0.1, 0.2, (-2.0,), (2.0,))
        m = point_mass(g, 20)  # mean at x = 0 = node 20
        assert running_cost(p, g, 20, 1.0, m) == pytest.approx(0.05)

    def test_linear_in_dt(self):
        p = lq_gaussian()
        g1 = GridSpec(1, 0.1, 0.1, 0.2, (-2.0,), (2.0,))
        g2 = GridSpec(1, 0.1, 0.2, 0.2, (-2.0,), (2.0,))
        m = project_initial_density(g1, p.m0)
        assert running_cost(p, g2, 7, 0.4, m) == pytest.approx(2 * running_cost(p, g1, 7, 0.4, m))

    def test_rejects_controls_outside_the_box(self):
        p = lq_gaussian()
        g = p.grid(0.1)
        with pytest.raises(ValueError):
            running_cost(p, g, 0, 2.5, np.ones(g.n_nodes) / g.n_nodes)


def test_mean_distance_coupling_in_2d():
    g = GridSpec.uniform(2, 0.5, 1.0, -1.0, 1.0)
    m = point_mass(g, 0)
    val = MeanDistanceCoupling()(np.array([[1.0, 1.0]]), m, g)
    assert val[0] == pytest.approx(4.0)


def test_crowd_coupling_is_monotone_on_small_instances():
    """Discrete Lasry-Lions monotonicity of the aversion coupling on 16-node grids.

    ``sum (F(m) - F(m~)) (m - m~) >= 0`` for random pairs of densities.
    """
    p = target_aversion_1d(domain=(-0.75, 0.75))
    g = p.grid(0.1, 0.1)
    rng = np.random.default_rng(0)
    worst = np.inf
    for _ in range(200):
        m, mt = rng.dirichlet(np.ones(g.n_nodes)), rng.dirichlet(np.ones(g.n_nodes))
        worst = min(worst, float((p.F.nodal(g, m) - p.F.nodal(g, mt)) @ (m - mt)))
    assert worst >= -1e-14


class TestProblemConfig:
    def test_defaults_build_lq(self):
        p = ProblemConfig().build()
        assert p.name == "lq" and p.horizon == 0.25

    def test_builtin_defaults(self):
        assert ProblemConfig(name="aversion1d").build().params["lam"] == 2.5
        p2 = ProblemConfig(name="aversion2d").build()
        assert p2.params["lam"] == 2.0 and p2.dim == 2

    def test_overrides(self):
        p = ProblemConfig(name="aversion1d", lam=0.8, horizon=1.0, domain=(-1.0, 1.0)).build()
        assert p.params["lam"] == 0.8 and p.horizon == 1.0 and p.domain == (-1.0, 1.0)

    def test_roundtrip(self):
        cfg = ProblemConfig(name="aversion2d", lam=0.8, domain=(-2.0, 2.0))
        assert ProblemConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown problem keys"):
            ProblemConfig.from_dict({"name": "lq", "lambda": 2})

    def test_unknown_problem(self):
        with pytest.raises(ValueError, match="unknown problem"):
            ProblemConfig(name="crowd3d")

    @pytest.mark.parametrize("attr", ["lam", "sigma", "sigma0", "gamma", "truncation"])
    def test_rejects_nonpositive_parameters(self, attr):
        with pytest.raises(ValueError):
            ProblemConfig(**{attr: 0.0})


def test_problem_rejects_bad_horizon_and_bound():
    with pytest.raises(ValueError):
        lq_gaussian(horizon=0.0)
    with pytest.raises(ValueError):
        lq_gaussian(control_bound=-1.0)
