"""Fixed-point solvers for the coupled discrete system: DLVI, DPI and ADLVI.

* DLVI is fictitious play: best-respond to the running average of the
  population paths produced so far.
* DPI alternates transport under a policy, evaluation of that policy, and a
  policy update through the mollified gradient of the value.
* ADLVI warm-starts DLVI on the fine grid with a DPI solution from a grid
  coarsened by integer factors in space and time.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .grid import GridSpec, mollified_gradient, project_initial_density, refine_factor, q1_stencil
from .hjb import evaluate_policy_value, solve_backward
from .problem import MFGProblem
from .transport import solve_forward

logger = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Tolerances and discretisation rules shared by the three solvers."""

    tol: float = 1e-3
    max_iter: int = 500
    coarse_factors: tuple[int, int] = (2, 2)
    eps_factor: float = 3.0
    n_scan: int = 11
    tol_min: float = 1e-8
    minimizer_method: str = "auto"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 2:
            raise ValueError("max_iter must be at least 2")
        if any(int(f) < 1 for f in self.coarse_factors):
            raise ValueError("coarse factors must be >= 1")
        self.coarse_factors = tuple(int(f) for f in self.coarse_factors)
        if self.minimizer_method not in ("auto", "exact", "scan"):
            raise ValueError(f"unknown minimizer_method {self.minimizer_method!r}")

    def eps_for(self, dt: float) -> float:
        return self.eps_factor * math.sqrt(dt)

    @property
    def minimizer(self) -> dict:
        return {"n_scan": self.n_scan, "tol": self.tol_min, "method": self.minimizer_method}


@dataclass
class SolveDiagnostics:
    iterations: int | tuple[int, int]
    history: list[tuple[float, float]] = field(default_factory=list)
    wall_time: float = 0.0
    counters: dict = field(default_factory=dict)
    stop_reason: str = ""
    converged: bool = False
    stages: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["iterations"] = list(self.iterations) if isinstance(self.iterations, tuple) else self.iterations
        out["history"] = [[_jsonable(a), _jsonable(b)] for a, b in self.history]
        out["counters"] = {k: _jsonable(v) for k, v in self.counters.items()}
        out["stages"] = {k: v.to_dict() if isinstance(v, SolveDiagnostics) else v for k, v in self.stages.items()}
        return out


def _jsonable(x):
    x = float(x) if isinstance(x, (np.floating, float)) else x
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class FixedPointResult:
    grid: GridSpec
    m: np.ndarray
    v: np.ndarray
    q: np.ndarray
    diagnostics: SolveDiagnostics


class NotConvergedWarning(RuntimeWarning):
    pass


def _check_same(a: np.ndarray, b: np.ndarray):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"grid mismatch: {np.shape(a)} vs {np.shape(b)}")


def err_density(m: np.ndarray, m_tilde: np.ndarray) -> float:
    """L1 distance of the terminal slices of two computed density paths (or slices)."""
    _check_same(m, m_tilde)
    a = np.asarray(m, dtype=float)
    b = np.asarray(m_tilde, dtype=float)
    if a.ndim == 2:
        a, b = a[-1], b[-1]
    return float(np.abs(a - b).sum())


def err_density_analytic(g: GridSpec, m: np.ndarray, density_at_nodes: np.ndarray) -> float:
    """Rectangle-rule L1 distance between a computed terminal slice and nodal density samples."""
    a = np.asarray(m, dtype=float)
    if a.ndim == 2:
        a = a[-1]
    _check_same(a, density_at_nodes)
    return float(g.cell_volume * np.abs(a / g.cell_volume - np.asarray(density_at_nodes)).sum())


def err_value(v: np.ndarray, v_tilde: np.ndarray) -> float:
    """Max-norm distance of the initial-time slices of two value fields."""
    _check_same(v, v_tilde)
    return float(np.max(np.abs(np.asarray(v)[0] - np.asarray(v_tilde)[0])))


def initial_path(g: GridSpec, p: MFGProblem) -> np.ndarray:
    """Every time level set to the projected initial density."""
    return np.tile(project_initial_density(g, p.m0), (g.n_time, 1))


def dlvi(g: GridSpec, p: MFGProblem, cfg: SolverConfig | None = None, m_bar_init: np.ndarray | None = None,
         callback: Callable[[dict], None] | None = None) -> FixedPointResult:
    """Discrete learning value iteration (fictitious play on the density).

    Stops at ``n > 1`` once ``E1(m^(n+1), m^(n)) < tol`` and
    ``E_inf(v^(n), v^(n-1)) < tol``; returns ``(m^(n+1), v^(n), q^(n))``.
    """
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    m0 = project_initial_density(g, p.m0)
    m_bar = initial_path(g, p) if m_bar_init is None else np.array(m_bar_init, dtype=float)
    if m_bar.shape != (g.n_time, g.n_nodes):
        raise ValueError(f"initial path has shape {m_bar.shape}, expected {(g.n_time, g.n_nodes)}")
    counters: dict = {}
    diag = SolveDiagnostics(iterations=0, counters=counters)
    m_prev = v_prev = None
    for n in range(1, cfg.max_iter + 1):
        v, q = solve_backward(g, p, m_bar, stats=counters, **cfg.minimizer)
        m_new = solve_forward(g, q, m0, stats=counters)
        e1 = err_density(m_new, m_prev) if m_prev is not None else math.nan
        einf = err_value(v, v_prev) if v_prev is not None else math.nan
        diag.history.append((e1, einf))
        diag.iterations = n
        if callback is not None:
            callback({"algorithm": "dlvi", "iteration": n, "E1": e1, "Einf": einf})
        logger.debug("dlvi n=%d E1=%.3e Einf=%.3e", n, e1, einf)
        if n > 1 and e1 < cfg.tol and einf < cfg.tol:
            diag.converged, diag.stop_reason = True, "tolerance"
            break
        m_bar = (1.0 - 1.0 / (n + 1)) * m_bar + m_new / (n + 1)
        m_prev, v_prev = m_new, v
    else:
        diag.stop_reason = "max_iter"
    diag.wall_time = time.perf_counter() - start
    return FixedPointResult(g, m_new, v, q, diag)


def policy_update(g: GridSpec, p: MFGProblem, v: np.ndarray, eps: float) -> tuple[np.ndarray, int]:
    """Feedback ``DpH(x_i, mollified gradient of v_k)`` clipped to the control box."""
    x = g.nodes
    q = np.empty((g.n_steps, g.n_nodes, g.dim))
    for k in range(g.n_steps):
        q[k] = p.DpH(x, mollified_gradient(g, v[k], eps))
    C = p.control_bound
    clipped = int((np.abs(q) > C).sum())
    return np.clip(q, -C, C), clipped


def dpi(g: GridSpec, p: MFGProblem, cfg: SolverConfig | None = None, q_init: np.ndarray | None = None,
        eps: float | None = None, callback: Callable[[dict], None] | None = None) -> FixedPointResult:
    """Discrete policy iteration with a mollified-gradient policy update.

    Stops at ``n > 1`` once ``E1(m^(n), m^(n-1)) < tol`` and
    ``E_inf(v^(n), v^(n-1)) < tol``; returns ``(m^(n), v^(n), q^(n))``. The
    next policy ``q^(n+1)`` is stored in ``diagnostics.stages["next_policy"]``.
    """
    cfg = cfg or SolverConfig()
    eps = cfg.eps_for(g.dt) if eps is None else eps
    start = time.perf_counter()
    m0 = project_initial_density(g, p.m0)
    q = np.zeros((g.n_steps, g.n_nodes, g.dim)) if q_init is None else np.array(q_init, dtype=float)
    if q.shape != (g.n_steps, g.n_nodes, g.dim):
        raise ValueError(f"initial policy has shape {q.shape}")
    if np.max(np.abs(q), initial=0.0) > p.control_bound + 1e-12:
        raise ValueError("initial policy leaves the control box")
    counters: dict = {"clipped_controls": 0}
    diag = SolveDiagnostics(iterations=0, counters=counters)
    m_prev = v_prev = None
    for n in range(1, cfg.max_iter + 1):
        m = solve_forward(g, q, m0, stats=counters)
        v = evaluate_policy_value(g, p, m, q)
        q_next, clipped = policy_update(g, p, v, eps)
        counters["clipped_controls"] += clipped
        e1 = err_density(m, m_prev) if m_prev is not None else math.nan
        einf = err_value(v, v_prev) if v_prev is not None else math.nan
        diag.history.append((e1, einf))
        diag.iterations = n
        if callback is not None:
            callback({"algorithm": "dpi", "iteration": n, "E1": e1, "Einf": einf})
        logger.debug("dpi n=%d E1=%.3e Einf=%.3e", n, e1, einf)
        if n > 1 and e1 < cfg.tol and einf < cfg.tol:
            diag.converged, diag.stop_reason = True, "tolerance"
            break
        m_prev, v_prev, q = m, v, q_next
    else:
        diag.stop_reason = "max_iter"
    diag.stages["next_policy"] = q_next
    diag.stages["eps"] = eps
    diag.wall_time = time.perf_counter() - start
    return FixedPointResult(g, m, v, q, diag)


def prolong_density(m_coarse: np.ndarray, g_coarse: GridSpec, g_fine: GridSpec) -> np.ndarray:
    """Carry a coarse density path to a finer grid.

    Linear in time between the bracketing coarse levels, Q1 in space on the
    nodal densities, then converted to fine cell masses and renormalised.
    """
    if g_coarse.dim != g_fine.dim or not np.allclose(g_coarse.domain_lo, g_fine.domain_lo) \
            or not math.isclose(g_coarse.horizon, g_fine.horizon):
        raise ValueError("coarse and fine grids cover different space-time boxes")
    refine_factor(g_coarse.dx, g_fine.dx)
    m_coarse = np.asarray(m_coarse, dtype=float)
    if m_coarse.shape != (g_coarse.n_time, g_coarse.n_nodes):
        raise ValueError("coarse path does not match the coarse grid")
    index, weight = q1_stencil(g_coarse, g_fine.nodes)
    out = np.empty((g_fine.n_time, g_fine.n_nodes))
    for k, t in enumerate(g_fine.times):
        s = min(t / g_coarse.dt, g_coarse.n_steps)
        k0 = min(int(math.floor(s + 1e-12)), g_coarse.n_steps)
        w = s - k0
        slice_c = m_coarse[k0] if w < 1e-12 else (1 - w) * m_coarse[k0] + w * m_coarse[k0 + 1]
        rho = slice_c / g_coarse.cell_volume
        fine = (rho[index] * weight).sum(axis=-1) * g_fine.cell_volume
        out[k] = fine / fine.sum()
    return out


def coarse_grid(g: GridSpec, factors: tuple[int, int]) -> GridSpec:
    fx, ft = factors
    return GridSpec(g.dim, g.dx * fx, g.dt * ft, g.horizon, g.domain_lo, g.domain_hi)


def adlvi(g: GridSpec, p: MFGProblem, cfg: SolverConfig | None = None,
          callback: Callable[[dict], None] | None = None) -> FixedPointResult:
    """Coarse-grid DPI warm start followed by fine-grid DLVI.

    ``diagnostics.iterations`` is the pair ``(n_c, n_f)``.
    """
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    gc = coarse_grid(g, cfg.coarse_factors)
    coarse = dpi(gc, p, cfg, eps=cfg.eps_for(gc.dt), callback=callback)
    m_bar = prolong_density(coarse.m, gc, g)
    fine = dlvi(g, p, cfg, m_bar_init=m_bar, callback=callback)
    diag = SolveDiagnostics(
        iterations=(coarse.diagnostics.iterations, fine.diagnostics.iterations),
        history=fine.diagnostics.history,
        counters=dict(fine.diagnostics.counters),
        stop_reason=fine.diagnostics.stop_reason,
        converged=coarse.diagnostics.converged and fine.diagnostics.converged,
        stages={"coarse": coarse.diagnostics, "fine": fine.diagnostics, "coarse_grid": gc.to_dict()},
    )
    coarse.diagnostics.stages.pop("next_policy", None)
    diag.wall_time = time.perf_counter() - start
    return FixedPointResult(g, fine.m, fine.v, fine.q, diag)


def scheme_residual(g: GridSpec, p: MFGProblem, m: np.ndarray, v: np.ndarray, **kw) -> tuple[float, float]:
    """Max defect of ``(m, v)`` in the backward and forward equations of the scheme.

    The controls are recomputed from ``v``; the density defect uses them and
    the initial slice of ``m``.
    """
    v_star, q = solve_backward(g, p, m, warn=False, **kw)
    m_star = solve_forward(g, q, np.asarray(m)[0])
    return float(np.max(np.abs(v_star - v))), float(np.max(np.abs(m_star - m)))


__all__ = [
    "SolverConfig", "SolveDiagnostics", "FixedPointResult", "err_density", "err_density_analytic", "err_value",
    "dlvi", "dpi", "adlvi", "prolong_density", "coarse_grid", "policy_update", "initial_path", "scheme_residual",
    "mollified_gradient",
]
