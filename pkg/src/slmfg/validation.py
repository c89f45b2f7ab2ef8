"""Runtime checks of the grid-function invariants (raise ``ValueError``)."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec

MASS_TOL = 1e-12


def check_density_slice(g: GridSpec, m, *, tol: float = MASS_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (g.n_nodes,):
        raise ValueError(f"density slice has shape {m.shape}, expected ({g.n_nodes},)")
    if not np.all(np.isfinite(m)):
        raise ValueError("density slice has non-finite entries")
    if np.any(m < 0):
        raise ValueError(f"density slice has negative mass (min {m.min():.3e})")
    if abs(m.sum() - 1.0) > tol:
        raise ValueError(f"density slice sums to {m.sum():.15g}, not 1")
    return m


def check_density_path(g: GridSpec, m, *, tol: float = MASS_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (g.n_time, g.n_nodes):
        raise ValueError(f"density path has shape {m.shape}, expected {(g.n_time, g.n_nodes)}")
    for k in range(g.n_time):
        try:
            check_density_slice(g, m[k], tol=tol)
        except ValueError as exc:
            raise ValueError(f"time level {k}: {exc}") from None
    return m


def check_value_field(g: GridSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (g.n_time, g.n_nodes):
        raise ValueError(f"value field has shape {v.shape}, expected {(g.n_time, g.n_nodes)}")
    if not np.all(np.isfinite(v)):
        raise ValueError("value field has non-finite entries")
    return v


def check_control_field(g: GridSpec, q, bound: float, *, slack: float = 1e-12) -> np.ndarray:
    """Shape ``(n_steps, n_nodes, dim)`` and ``|q|_inf <= bound``."""
    q = np.asarray(q, dtype=float)
    if q.shape != (g.n_steps, g.n_nodes, g.dim):
        raise ValueError(f"control field has shape {q.shape}, expected {(g.n_steps, g.n_nodes, g.dim)}")
    if not np.all(np.isfinite(q)):
        raise ValueError("control field has non-finite entries")
    if q.size and np.max(np.abs(q)) > bound + slack:
        raise ValueError(f"control field leaves the box |a| <= {bound} (max {np.max(np.abs(q)):.6g})")
    return q
