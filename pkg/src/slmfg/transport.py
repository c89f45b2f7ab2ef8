"""Forward semi-Lagrangian transport of grid densities and the cost functional."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec, clamped, q1_stencil
from .problem import MFGProblem


def ce_step(g: GridSpec, m_k: np.ndarray, q_k: np.ndarray, *, stats=None) -> np.ndarray:
    """Push a density slice along the feet ``x_j - dt q_j``.

    ``m_{k+1, i} = sum_j beta_i(x_j - dt q_j) m_{k, j}``; mass on feet outside
    the box lands on the boundary nodes (clamping).
    """
    m_k = np.asarray(m_k, dtype=float)
    feet = g.nodes - g.dt * np.asarray(q_k, dtype=float).reshape(g.n_nodes, g.dim)
    index, weight = q1_stencil(g, feet)
    if stats is not None:
        stats["clamped_mass_events"] = stats.get("clamped_mass_events", 0) + int(
            (clamped(g, feet) & (m_k > 0)).sum())
    # bincount accumulates in ascending source order for every target node
    return np.bincount(index.ravel(), weights=(weight * m_k[:, None]).ravel(), minlength=g.n_nodes)


def solve_forward(g: GridSpec, q: np.ndarray, m0slice: np.ndarray, *, stats=None) -> np.ndarray:
    """Density path generated by the control field ``q`` from ``m0slice``."""
    m = np.empty((g.n_time, g.n_nodes))
    m[0] = m0slice
    for k in range(g.n_steps):
        m[k + 1] = ce_step(g, m[k], q[k], stats=stats)
    return m


def cost_functional(g: GridSpec, p: MFGProblem, m: np.ndarray, q: np.ndarray) -> float:
    """Expected cost of feedback ``q`` for a player facing the population path ``m``.

    The player's own law starts from ``m[0]`` and is transported by ``q``.
    """
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    law = solve_forward(g, q, m[0])
    x = g.nodes
    total = 0.0
    for k in range(g.n_steps):
        c = g.dt * (p.L(x, q[k]) + p.running_coupling(g, m[k]))
        total += float(law[k] @ c)
    return total + float(law[-1] @ p.terminal_coupling(g, m[-1]))
