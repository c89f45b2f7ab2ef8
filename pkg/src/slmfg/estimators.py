"""Estimator-style wrappers around the fixed-point solvers.

The "training data" of a solver is the game itself: ``fit(problem)`` solves
the discrete system on a grid built from the estimator's ``dx``/``dt`` and
stores the fitted fields; ``predict(X, t)`` evaluates the space-time value
extension at query points. Hyperparameters follow the scikit-learn
conventions, so ``get_params``/``set_params``/``clone`` work as usual.

>>> from slmfg import DLVISolver, lq_gaussian
>>> est = DLVISolver(dx=0.1).fit(lq_gaussian())
>>> est.n_iter_
2
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .fixedpoint import FixedPointResult, SolverConfig, adlvi, dlvi, dpi
from .grid import extend_density, extend_value
from .problem import MFGProblem, ProblemConfig


def _as_problem(problem) -> MFGProblem:
    if isinstance(problem, MFGProblem):
        return problem
    if isinstance(problem, ProblemConfig):
        return problem.build()
    if isinstance(problem, str):
        return ProblemConfig(name=problem).build()
    if isinstance(problem, dict):
        return ProblemConfig.from_dict(problem).build()
    raise TypeError(f"cannot build a problem from {type(problem).__name__}")


class _FixedPointSolver(BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_solve``."""

    def __init__(self, dx=0.1, dt=None, tol=1e-3, max_iter=500, n_scan=11, tol_min=1e-8, minimizer="auto"):
        self.dx = dx
        self.dt = dt
        self.tol = tol
        self.max_iter = max_iter
        self.n_scan = n_scan
        self.tol_min = tol_min
        self.minimizer = minimizer

    def _config(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iter=self.max_iter, n_scan=self.n_scan, tol_min=self.tol_min,
                            minimizer_method=self.minimizer)

    def _solve(self, g, p, cfg) -> FixedPointResult:
        raise NotImplementedError

    def fit(self, problem, y=None):
        """Solve the game; ``problem`` is an MFGProblem, ProblemConfig, dict or built-in name."""
        p = _as_problem(problem)
        g = p.grid(self.dx, self.dt)
        res = self._solve(g, p, self._config())
        self.problem_ = p
        self.grid_ = g
        self.value_ = res.v
        self.density_ = res.m
        self.controls_ = res.q
        self.diagnostics_ = res.diagnostics
        self.n_iter_ = res.diagnostics.iterations
        self.converged_ = res.diagnostics.converged
        if not self.converged_:
            warnings.warn(f"{type(self).__name__} stopped after {self.n_iter_} iterations without "
                          f"reaching tol={self.tol}", ConvergenceWarning, stacklevel=2)
        return self

    def predict(self, X, t: float = 0.0) -> np.ndarray:
        """Value extension at points ``X`` of shape ``(n, dim)`` and time ``t``."""
        check_is_fitted(self, "value_")
        return np.atleast_1d(extend_value(self.grid_, self.value_, self._points(X), t))

    def predict_density(self, X, t: float | None = None) -> np.ndarray:
        """Piecewise-constant density at points ``X``; ``t`` defaults to the horizon."""
        check_is_fitted(self, "density_")
        t = self.grid_.horizon if t is None else t
        return np.atleast_1d(extend_density(self.grid_, self.density_, self._points(X), t))

    def _points(self, X):
        X = np.asarray(X, dtype=float)
        return X.reshape(-1, self.grid_.dim)


class DLVISolver(_FixedPointSolver):
    """Fictitious-play value iteration."""

    def _solve(self, g, p, cfg):
        return dlvi(g, p, cfg)


class DPISolver(_FixedPointSolver):
    """Policy iteration with a mollified-gradient update; ``eps`` defaults to ``eps_factor * sqrt(dt)``."""

    def __init__(self, dx=0.1, dt=None, tol=1e-3, max_iter=500, n_scan=11, tol_min=1e-8, minimizer="auto",
                 eps=None, eps_factor=3.0):
        super().__init__(dx=dx, dt=dt, tol=tol, max_iter=max_iter, n_scan=n_scan, tol_min=tol_min,
                         minimizer=minimizer)
        self.eps = eps
        self.eps_factor = eps_factor

    def _config(self):
        cfg = super()._config()
        cfg.eps_factor = self.eps_factor
        return cfg

    def _solve(self, g, p, cfg):
        return dpi(g, p, cfg, eps=self.eps)


class ADLVISolver(_FixedPointSolver):
    """Coarse-grid policy iteration followed by fine-grid value iteration.

    ``n_iter_`` is the pair ``(n_c, n_f)``.
    """

    def __init__(self, dx=0.1, dt=None, tol=1e-3, max_iter=500, n_scan=11, tol_min=1e-8, minimizer="auto",
                 coarse_factors=(2, 2), eps_factor=3.0):
        super().__init__(dx=dx, dt=dt, tol=tol, max_iter=max_iter, n_scan=n_scan, tol_min=tol_min,
                         minimizer=minimizer)
        self.coarse_factors = coarse_factors
        self.eps_factor = eps_factor

    def _config(self):
        cfg = super()._config()
        cfg.coarse_factors = tuple(int(f) for f in self.coarse_factors)
        cfg.eps_factor = self.eps_factor
        return cfg

    def _solve(self, g, p, cfg):
        return adlvi(g, p, cfg)


SOLVERS = {"dlvi": DLVISolver, "dpi": DPISolver, "adlvi": ADLVISolver}
