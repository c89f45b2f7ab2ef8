import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning, NotFittedError

from slmfg import ADLVISolver, DLVISolver, DPISolver, ProblemConfig, lq_gaussian
from slmfg.estimators import SOLVERS
from slmfg.oracle import exact_value, lq_solve


def test_params_roundtrip():
    est = ADLVISolver(dx=0.05, coarse_factors=(2, 1))
    params = est.get_params()
    assert params["dx"] == 0.05 and params["coarse_factors"] == (2, 1)
    assert set(DPISolver().get_params()) >= {"eps", "eps_factor", "minimizer"}
    est.set_params(tol=1e-4)
    assert est.tol == 1e-4


def test_clone_gives_an_unfitted_copy():
    est = DLVISolver(dx=0.1).fit("lq")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "value_")


def test_repr_shows_changed_parameters():
    assert "dx=0.05" in repr(DLVISolver(dx=0.05))


@pytest.mark.parametrize("problem", [lq_gaussian(), ProblemConfig(), {"name": "lq"}, "lq"])
def test_fit_accepts_several_problem_forms(problem):
    est = DLVISolver(dx=0.1).fit(problem)
    assert est.n_iter_ == 2 and est.converged_


def test_fit_rejects_other_inputs():
    with pytest.raises(TypeError):
        DLVISolver().fit(3.5)


def test_predict_approximates_the_lq_value():
    est = DLVISolver(dx=0.05).fit("lq")
    sol = lq_solve(0.1, 0.105, 0.25)
    x = np.linspace(-1, 1, 11)[:, None]
    np.testing.assert_allclose(est.predict(x), exact_value(sol, x[:, 0], 0.0), atol=1e-2)
    assert est.predict(x, t=0.25).shape == (11,)


def test_predicted_density_integrates_to_one():
    est = DLVISolver(dx=0.05).fit("lq")
    x = np.linspace(-2.0, 2.0, 4001)
    dens = est.predict_density(x[:, None])
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-2)


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        DLVISolver().predict([[0.0]])


def test_fitted_attributes():
    est = ADLVISolver(dx=0.1).fit("lq")
    n_c, n_f = est.n_iter_
    assert n_f == 2
    assert est.value_.shape == (est.grid_.n_time, est.grid_.n_nodes)
    assert est.density_.shape == est.value_.shape
    assert est.controls_.shape == (est.grid_.n_steps, est.grid_.n_nodes, 1)


def test_dpi_estimator_uses_an_explicit_width():
    est = DPISolver(dx=0.1, eps=0.2).fit("lq")
    assert est.diagnostics_.stages["eps"] == 0.2


def test_non_convergence_warns():
    with pytest.warns(ConvergenceWarning):
        est = DLVISolver(dx=0.2, max_iter=2).fit({"name": "aversion1d", "horizon": 1.0})
    assert not est.converged_


def test_registry():
    assert SOLVERS == {"dlvi": DLVISolver, "dpi": DPISolver, "adlvi": ADLVISolver}


def test_module_example():
    import doctest

    import slmfg.estimators

    assert doctest.testmod(slmfg.estimators).failed == 0
