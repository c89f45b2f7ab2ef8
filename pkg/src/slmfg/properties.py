"""Randomised structure-preservation checks shared by ``slmfg verify`` and the tests.

Every check draws one random instance from a ``numpy.random.Generator`` and
returns a scalar *violation*; the check passes when the violation is at most
its tolerance. :func:`run_suite` aggregates pass counts over many trials.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import GridSpec, q1_stencil
from .hjb import ControlBoxWarning, hjb_step, solve_backward
from .monotone import monotonicity_gap, optimal_controls, random_state, structural_terms
from .problem import lq_gaussian, target_aversion_1d, target_aversion_2d
from .transport import ce_step, cost_functional


def sign_flipped_ce_step(g: GridSpec, m_k, q_k, *, stats=None):
    """Deliberately wrong transport (feet at ``x + dt q``) for mutation testing."""
    return ce_step(g, m_k, -np.asarray(q_k), stats=stats)


def random_grid(rng: np.random.Generator, dim: int | None = None, max_nodes: int = 12) -> GridSpec:
    dim = int(rng.integers(1, 3)) if dim is None else dim
    n = int(rng.integers(4, max_nodes + 1))
    dx = float(rng.uniform(0.05, 0.5))
    lo = float(rng.uniform(-2.0, 0.0))
    dt = float(rng.uniform(0.02, 0.5))
    return GridSpec(dim, dx, dt, dt * int(rng.integers(1, 4)), (lo,) * dim, (lo + (n - 1) * dx,) * dim)


def _random_slice(rng, g):
    m = rng.random(g.n_nodes) * (rng.random(g.n_nodes) < 0.7)
    m[rng.integers(g.n_nodes)] += 1e-3
    return m / m.sum()


def _random_controls(rng, g, bound):
    return rng.uniform(-bound, bound, size=(g.n_nodes, g.dim))


def check_simplex(rng, step=ce_step) -> float:
    """Mass defect of one transport step; negative mass counts as infinite violation."""
    g = random_grid(rng)
    m = _random_slice(rng, g)
    out = step(g, m, _random_controls(rng, g, 3 * g.dx / g.dt))
    if np.any(out < 0):
        return np.inf
    return abs(out.sum() - 1.0)


def check_adjoint(rng, step=ce_step) -> float:
    """``sum_i T(m)_i W_i`` against ``sum_j m_j I[W](x_j - dt q_j)``."""
    g = random_grid(rng)
    m = _random_slice(rng, g)
    q = _random_controls(rng, g, 2 * g.dx / g.dt)
    W = rng.normal(size=g.n_nodes)
    lhs = step(g, m, q) @ W
    index, weight = q1_stencil(g, g.nodes - g.dt * q)
    rhs = m @ (W[index] * weight).sum(axis=-1)
    return abs(lhs - rhs)


def check_partition(rng, n_points: int = 10) -> float:
    """Partition-of-unity defect of the Q1 weights at random (possibly clamped) points."""
    g = random_grid(rng)
    span = np.asarray(g.upper) - np.asarray(g.domain_lo)
    pts = rng.uniform(np.asarray(g.domain_lo) - 0.2 * span, np.asarray(g.upper) + 0.2 * span,
                      size=(n_points, g.dim))
    _, weight = q1_stencil(g, pts)
    if np.any(weight < 0):
        return np.inf
    return float(np.max(np.abs(weight.sum(axis=-1) - 1.0)))


def _small_problem(rng):
    """A built-in problem on a small coarse grid."""
    kind = int(rng.integers(3))
    if kind == 0:
        p = lq_gaussian()
        return p, p.grid(0.25)
    if kind == 1:
        p = target_aversion_1d(lam=float(rng.uniform(0.5, 3.0)), horizon=0.5)
        return p, p.grid(0.3)
    p = target_aversion_2d(lam=float(rng.uniform(0.5, 3.0)), horizon=0.3)
    return p, p.grid(0.6)


def check_hjb_monotone(rng, method: str = "auto") -> float:
    """Largest ``S[W](i) - S[W~](i)`` for random ``W <= W~`` (should be <= 0)."""
    p, g = _small_problem(rng)
    x = g.nodes
    W = np.sin(x @ rng.normal(size=g.dim) + rng.uniform(0, 6)) + 0.2 * rng.normal(size=g.n_nodes)
    Wt = W + rng.random(g.n_nodes) * (rng.random(g.n_nodes) < 0.5)
    m = _random_slice(rng, g)
    v, _ = hjb_step(g, p, W, m, method=method)
    vt, _ = hjb_step(g, p, Wt, m, method=method)
    return float(np.max(v - vt))


def _monotone_instance(rng):
    p = target_aversion_1d(lam=float(rng.uniform(0.5, 3.0)), horizon=0.3, domain=(-0.75, 0.75))
    g = p.grid(0.1, 0.1)
    w, wt = random_state(g, rng), random_state(g, rng)
    return p, g, w, wt, optimal_controls(g, p, w.v), optimal_controls(g, p, wt.v)


def check_pairing_identity(rng) -> float:
    """Defect of the pairing identity: gap minus its three structural terms."""
    p, g, w, wt, q, qt = _monotone_instance(rng)
    gap = monotonicity_gap(g, p, w, wt, q=q, qt=qt)
    return abs(gap - sum(structural_terms(g, p, w, wt, q, qt)))


def check_monotonicity_gap(rng) -> float:
    """Negative part of the monotonicity gap (the gap should be nonnegative)."""
    p, g, w, wt, q, qt = _monotone_instance(rng)
    return max(0.0, -monotonicity_gap(g, p, w, wt, q=q, qt=qt))


def check_dp_identity(rng) -> float:
    """``J_m(q*)`` against ``sum_j m_{j,0} v_{j,0}`` for a random density path."""
    p, g = _small_problem(rng)
    m = np.stack([_random_slice(rng, g) for _ in range(g.n_time)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ControlBoxWarning)
        v, q = solve_backward(g, p, m)
    return abs(cost_functional(g, p, m, q) - m[0] @ v[0])


@dataclass(frozen=True)
class Property:
    name: str
    check: Callable
    tol: float
    uses_step: bool = False


PROPERTIES = (
    Property("simplex", check_simplex, 1e-12, uses_step=True),
    Property("adjoint", check_adjoint, 1e-12, uses_step=True),
    Property("partition", check_partition, 1e-12),
    Property("hjb_monotone", check_hjb_monotone, 1e-9),
    Property("pairing_identity", check_pairing_identity, 1e-10),
    Property("monotonicity_gap", check_monotonicity_gap, 1e-10),
    Property("dp_identity", check_dp_identity, 1e-8),
)


@dataclass
class PropertyReport:
    name: str
    trials: int
    passed: int
    worst: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.passed == self.trials

    def to_dict(self) -> dict:
        worst = self.worst if np.isfinite(self.worst) else None
        return {"name": self.name, "trials": self.trials, "passed": self.passed, "worst": worst, "tol": self.tol}


def run_property(prop: Property, trials: int, seed: int, step=ce_step) -> PropertyReport:
    """Run ``trials`` independent draws; trial ``t`` uses the stream ``(seed, t)``."""
    passed, worst = 0, 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        viol = prop.check(rng, step=step) if prop.uses_step else prop.check(rng)
        worst = max(worst, viol)
        passed += bool(viol <= prop.tol)
    return PropertyReport(prop.name, trials, passed, worst, prop.tol)


def run_suite(trials: int, seed: int = 0, names=None, step=ce_step) -> list[PropertyReport]:
    chosen = [p for p in PROPERTIES if names is None or p.name in names]
    return [run_property(p, trials, seed, step=step) for p in chosen]


__all__ = [
    "PROPERTIES", "Property", "PropertyReport", "run_property", "run_suite", "sign_flipped_ce_step",
    "random_grid", "check_simplex", "check_adjoint", "check_partition", "check_hjb_monotone",
    "check_pairing_identity", "check_monotonicity_gap", "check_dp_identity",
]
