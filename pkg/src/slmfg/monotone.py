"""Discrete monotone-operator machinery used as a test oracle for the scheme.

For a couple ``w = (m, v)`` with optimal controls ``q`` the operator
``A[w]`` has two residual rows per non-terminal node ``(i, k)``::

    A1 = -v_{i,k} + phi_v(q_{i,k}) + dt f(x_i, m_k)
    A2 = m_{i,k+1} - sum_j m_{j,k} beta_i(x_j - dt q_{j,k})

with ``phi_v(a) = I[v_{k+1}](x_i - dt a) + dt L(x_i, a)``. Relaxed controls
only appear as Dirac masses at the computed minimisers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixedpoint import SolverConfig, dlvi, err_density, err_value
from .grid import GridSpec
from .hjb import _interp_many, minimize_controls
from .problem import MFGProblem
from .transport import ce_step


@dataclass(frozen=True)
class PairedState:
    """A density path and a value field on a common grid."""

    m: np.ndarray
    v: np.ndarray

    def __sub__(self, other: "PairedState") -> "PairedState":
        return PairedState(self.m - other.m, self.v - other.v)


@dataclass(frozen=True)
class Residuals:
    r1: np.ndarray  # (n_steps, n_nodes)
    r2: np.ndarray  # (n_steps, n_nodes)
    q: np.ndarray   # controls used, (n_steps, n_nodes, dim)


def optimal_controls(g: GridSpec, p: MFGProblem, v: np.ndarray, **kw) -> np.ndarray:
    """Minimisers of ``phi_v`` at every node and non-terminal level."""
    return np.stack([minimize_controls(g, p, v[k + 1], **kw)[0] for k in range(g.n_steps)])


def phi(g: GridSpec, p: MFGProblem, v: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``phi_v(q_{i,k})`` for every ``(k, i)``."""
    x = g.nodes
    return np.stack([_interp_many(g, v[k + 1], x - g.dt * q[k]) + g.dt * p.L(x, q[k])
                     for k in range(g.n_steps)])


def _running(g, p, m):
    return np.stack([p.running_coupling(g, m[k]) for k in range(g.n_steps)])


def a_delta_apply(g: GridSpec, p: MFGProblem, w: PairedState, q: np.ndarray | None = None,
                  *, step=ce_step, **kw) -> Residuals:
    """Both residual rows of the operator at ``w``.

    ``q`` defaults to the optimal controls of ``w.v``. ``step`` is the
    transport step used in the second row (swappable for fault injection).
    """
    m, v = np.asarray(w.m, dtype=float), np.asarray(w.v, dtype=float)
    if q is None:
        q = optimal_controls(g, p, v, **kw)
    r1 = -v[:-1] + phi(g, p, v, q) + g.dt * _running(g, p, m)
    r2 = np.stack([m[k + 1] - step(g, m[k], q[k]) for k in range(g.n_steps)])
    return Residuals(r1, r2, q)


def pairing(R: Residuals, z: PairedState) -> float:
    """``sum_{k<N} sum_i R1_{ik} z.m_{ik} + R2_{ik} z.v_{i,k+1}``.

    Bilinear in ``(R, z)``; ``<A[w~] - A[w], w~ - w>`` is
    ``pairing(A[w~] - A[w], w~ - w)``.
    """
    return float(np.sum(R.r1 * z.m[:-1]) + np.sum(R.r2 * z.v[1:]))


def pairing_naive(R: Residuals, z: PairedState) -> float:
    """Independent loop-based evaluation of :func:`pairing`."""
    total = 0.0
    n_steps, n = R.r1.shape
    for k in range(n_steps):
        for i in range(n):
            total += float(R.r1[k, i]) * float(z.m[k, i])
            total += float(R.r2[k, i]) * float(z.v[k + 1, i])
    return total


def _diff(Ra: Residuals, Rb: Residuals) -> Residuals:
    return Residuals(Ra.r1 - Rb.r1, Ra.r2 - Rb.r2, Ra.q)


def boundary_term(w: PairedState, wt: PairedState) -> float:
    m, v, mt, vt = w.m, w.v, wt.m, wt.v
    return float(np.sum((vt[0] - v[0]) * (m[0] - mt[0])) + np.sum((v[-1] - vt[-1]) * (m[-1] - mt[-1])))


def monotonicity_gap(g: GridSpec, p: MFGProblem, w: PairedState, wt: PairedState, *,
                     q: np.ndarray | None = None, qt: np.ndarray | None = None, step=ce_step, **kw) -> float:
    """``<A[w~] - A[w], w~ - w>`` minus the initial/terminal boundary term."""
    R = a_delta_apply(g, p, w, q, step=step, **kw)
    Rt = a_delta_apply(g, p, wt, qt, step=step, **kw)
    return pairing(_diff(Rt, R), wt - w) - boundary_term(w, wt)


def structural_terms(g: GridSpec, p: MFGProblem, w: PairedState, wt: PairedState,
                     q: np.ndarray, qt: np.ndarray) -> tuple[float, float, float]:
    """The three non-boundary terms of the pairing identity, evaluated directly.

    ``sum m [phi_v~(q) - phi_v~(q~)]``, ``sum m~ [phi_v(q~) - phi_v(q)]`` and
    ``dt sum (f(m) - f(m~)) (m - m~)``. The first two are nonnegative when the
    controls are minimisers; the last one is nonnegative under the discrete
    monotonicity of the coupling.
    """
    m, v, mt, vt = w.m, w.v, wt.m, wt.v
    t1 = np.sum(m[:-1] * (phi(g, p, vt, q) - phi(g, p, vt, qt)))
    t2 = np.sum(mt[:-1] * (phi(g, p, v, qt) - phi(g, p, v, q)))
    t3 = g.dt * np.sum((_running(g, p, m) - _running(g, p, mt)) * (m[:-1] - mt[:-1]))
    return float(t1), float(t2), float(t3)


def random_state(g: GridSpec, rng: np.random.Generator, n_bumps: int = 3) -> PairedState:
    """Random couple with densities on the inner half of the box and smooth values.

    Each density slice is normalised positive noise; the value field is a sum
    of Gaussian bumps with random centres, widths and signed amplitudes.
    """
    x = g.nodes
    lo, hi = np.asarray(g.domain_lo), np.asarray(g.upper)
    mid, half = (lo + hi) / 2, (hi - lo) / 4
    inner = np.all(np.abs(x - mid) <= half + 1e-12, axis=1)
    m = rng.random((g.n_time, g.n_nodes)) * inner
    m /= m.sum(axis=1, keepdims=True)
    v = np.zeros((g.n_time, g.n_nodes))
    for _ in range(n_bumps):
        c = rng.uniform(lo, hi, size=(g.n_time, 1, g.dim))
        width = rng.uniform(0.2, 1.0) * float(np.max(hi - lo))
        amp = rng.uniform(-1.0, 1.0)
        v += amp * np.exp(-((x[None] - c) ** 2).sum(axis=-1) / (2 * width**2))
    return PairedState(m, v)


def uniqueness_probe(g: GridSpec, p: MFGProblem, cfg: SolverConfig | None = None,
                     seed: int = 0) -> tuple[float, float]:
    """Distance between DLVI runs from the default and a random initial path.

    Returns ``(E1, E_inf)`` between the two limits; under uniqueness both are
    of the order of the stopping tolerance.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    a = dlvi(g, p, cfg)
    m_bar = rng.random((g.n_time, g.n_nodes))
    m_bar[0] = a.m[0]
    m_bar /= m_bar.sum(axis=1, keepdims=True)
    b = dlvi(g, p, cfg, m_bar_init=m_bar)
    return err_density(a.m, b.m), err_value(a.v, b.v)


__all__ = [
    "PairedState", "Residuals", "optimal_controls", "phi", "a_delta_apply", "pairing", "pairing_naive",
    "boundary_term", "monotonicity_gap", "structural_terms", "random_state", "uniqueness_probe",
]
