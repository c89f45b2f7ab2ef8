"""Backward semi-Lagrangian solve of the discrete HJB equation."""

from __future__ import annotations

import itertools
import warnings

import numpy as np

from .grid import GridSpec, clamped, q1_stencil
from .problem import MFGProblem

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
TIE_TOL = 1e-12


class ControlBoxWarning(RuntimeWarning):
    """An optimal control touched the boundary of the control box."""


def _interp_many(g: GridSpec, W: np.ndarray, pts: np.ndarray) -> np.ndarray:
    index, weight = q1_stencil(g, pts)
    return (W[index] * weight).sum(axis=-1)


class _Objective:
    """``a -> I[W](x_i - dt a) + dt L(x_i, a)`` on a fixed set of nodes."""

    def __init__(self, g: GridSpec, p: MFGProblem, W: np.ndarray, x: np.ndarray):
        self.g, self.p, self.W, self.x = g, p, W, x

    def __call__(self, a: np.ndarray) -> np.ndarray:
        foot = self.x - self.g.dt * a
        return _interp_many(self.g, self.W, foot) + self.g.dt * self.p.L(self.x, a)


def _golden(obj: _Objective, a: np.ndarray, axis: int, lo: np.ndarray, hi: np.ndarray, tol: float) -> np.ndarray:
    """Golden-section search along one axis; returns the final bracket midpoints."""
    a = a.copy()
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    a[:, axis] = x1
    f1 = obj(a)
    a[:, axis] = x2
    f2 = obj(a)
    while np.max(hi - lo) > tol:
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        nx1 = np.where(left, hi - GOLDEN * (hi - lo), x2)
        nx2 = np.where(left, x1, lo + GOLDEN * (hi - lo))
        probe = np.where(left, nx1, nx2)
        a[:, axis] = probe
        fp = obj(a)
        f1, f2 = np.where(left, fp, f2), np.where(left, f1, fp)
        x1, x2 = nx1, nx2
    return 0.5 * (lo + hi)


def control_ticks(g: GridSpec, bound: float, n_scan: int = 11, foot_ticks: bool = True) -> np.ndarray:
    """Per-axis scan values: a uniform lattice on ``[-C, C]`` plus, optionally,
    every control whose foot lands exactly on a grid node (``a = k dx / dt``).

    The node-landing controls are the kinks of the interpolated objective, so
    including them keeps every Q1 cell of the foot region represented.
    """
    ticks = np.linspace(-bound, bound, n_scan)
    if foot_ticks:
        step = g.dx / g.dt
        k = int(np.floor(bound / step + 1e-9))
        ticks = np.concatenate([ticks, step * np.arange(-k, k + 1)])
    ticks = np.sort(ticks)
    keep = np.concatenate([[True], np.diff(ticks) > 1e-12 * max(bound, 1.0)])
    return ticks[keep]


def _first_order_guesses(g: GridSpec, p: MFGProblem, W: np.ndarray, idx: np.ndarray,
                         x: np.ndarray) -> list[np.ndarray]:
    """Per-node candidates ``DpH(x, 0)`` and ``DpH(x, grad W)``, clipped to the box.

    The first minimises ``L(x, .)`` alone, the second is the continuous
    optimality condition with a centred-difference gradient.
    """
    C = p.control_bound
    if min(g.shape) > 1:
        parts = np.gradient(W.reshape(g.shape), g.dx)
        parts = [parts] if g.dim == 1 else parts
        grad = np.stack(parts, axis=-1).reshape(g.n_nodes, g.dim)[idx]
    else:
        grad = np.zeros_like(x)
    return [np.clip(p.DpH(x, np.zeros_like(x)), -C, C), np.clip(p.DpH(x, grad), -C, C)]


def _pattern_search(obj: _Objective, a: np.ndarray, f: np.ndarray, radius: float, tol: float,
                    bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Compass search over axis and diagonal directions with step halving.

    Q1 kinks are axis-aligned, so coordinate searches can stall on them; the
    diagonal moves get past such corners.
    """
    n, d = a.shape
    dirs = np.array([s for s in itertools.product((-1, 0, 1), repeat=d) if any(s)], dtype=float)
    r = np.full(n, radius)
    while np.any(r > tol):
        active = r > tol
        best_a, best_f = a.copy(), f.copy()
        for s in dirs:
            cand = np.clip(a + r[:, None] * s, -bound, bound)
            fc = obj(cand)
            imp = active & (fc < best_f)
            best_f = np.where(imp, fc, best_f)
            best_a[imp] = cand[imp]
        moved = best_f < f
        a, f = best_a, best_f
        r = np.where(active & ~moved, r / 2, r)
    return a, f


def _refine(obj: _Objective, a: np.ndarray, f: np.ndarray, ticks: np.ndarray, tol: float, max_sweeps: int,
            bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis golden sections between neighbouring ticks, then (d > 1) a compass polish."""
    n, d = a.shape
    n_tick = len(ticks)
    if n_tick < 2:
        return a, f
    a, f = a.copy(), f.copy()
    for _ in range(1 if d == 1 else max_sweeps):
        f_start = f.copy()
        for axis in range(d):
            # bracket between the ticks adjacent to the current point
            j = np.clip(np.searchsorted(ticks, a[:, axis], side="left"), 0, n_tick - 1)
            lo = ticks[np.maximum(j - 1, 0)]
            on_tick = np.abs(ticks[j] - a[:, axis]) <= 1e-15
            hi = np.where(on_tick, ticks[np.minimum(j + 1, n_tick - 1)], ticks[j])
            cand = a.copy()
            cand[:, axis] = _golden(obj, a, axis, lo, hi, tol)
            fc = obj(cand)
            better = fc < f
            a[better] = cand[better]
            f = np.where(better, fc, f)
        if np.all(f_start - f < 1e-14):
            break
    if d > 1:
        a, f = _pattern_search(obj, a, f, 0.5 * float(np.max(np.diff(ticks))), tol, bound)
    return a, f

_CHUNK = 400_000  # rectangles (times nodes) processed per block in the exact minimiser


def _lex_argmin(vals: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Index of the minimum of ``vals`` along axis 1; ties within ``TIE_TOL``
    go to the lexicographically smallest control ``a[:, j, :]``."""
    mask = vals <= vals.min(axis=1, keepdims=True) + TIE_TOL
    for axis in range(a.shape[-1]):
        comp = np.where(mask, a[..., axis], np.inf)
        mask &= comp <= comp.min(axis=1, keepdims=True) + TIE_TOL
    return np.argmax(mask, axis=1)


def _rect_minima_1d(I, ticks, b, dt):
    lo, h = ticks[:-1], np.diff(ticks)
    f0 = I[:, :-1]
    slope = (I[:, 1:] - f0) / h
    u = np.clip(-slope / dt - (lo - b), 0.0, h)
    val = f0 + slope * u + 0.5 * dt * (lo + u - b) ** 2
    return val, (lo + u)[..., None]


def _rect_minima_2d(I, ticks, b, dt):
    lo, h = ticks[:-1], np.diff(ticks)
    lo1, h1 = lo[None, :, None], h[None, :, None]
    lo2, h2 = lo[None, None, :], h[None, None, :]
    b1, b2 = b[:, 0, None, None], b[:, 1, None, None]
    f00, f10, f01, f11 = I[:, :-1, :-1], I[:, 1:, :-1], I[:, :-1, 1:], I[:, 1:, 1:]
    p1, p2 = (f10 - f00) / h1, (f01 - f00) / h2
    c = (f11 - f10 - f01 + f00) / (h1 * h2)
    r1, r2 = dt * (lo1 - b1), dt * (lo2 - b2)

    def value(u1, u2):
        return (f00 + p1 * u1 + p2 * u2 + c * u1 * u2
                + 0.5 * dt * ((lo1 + u1 - b1) ** 2 + (lo2 + u2 - b2) ** 2))

    zero = np.zeros_like(f00)
    cands = []
    # the four edges: the objective is a convex parabola along each
    for u1 in (zero, zero + h1):
        u2 = np.clip(-(p2 + c * u1 + r2) / dt, 0.0, h2)
        cands.append((u1, u2))
    for u2 in (zero, zero + h2):
        u1 = np.clip(-(p1 + c * u2 + r1) / dt, 0.0, h1)
        cands.append((u1, u2))
    # interior stationary point, a minimum only when the Hessian is positive definite
    det = dt * dt - c * c
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = (-dt * (p1 + r1) + c * (p2 + r2)) / det
        u2 = (-dt * (p2 + r2) + c * (p1 + r1)) / det
    inside = (det > 0) & (u1 >= 0) & (u1 <= h1) & (u2 >= 0) & (u2 <= h2)
    cands.append((np.where(inside, u1, 0.0), np.where(inside, u2, 0.0)))

    vals = np.stack([value(u1, u2) for u1, u2 in cands], axis=-1)
    vals[..., -1] = np.where(inside, vals[..., -1], np.inf)
    k = np.argmin(vals, axis=-1)[..., None]
    best = np.take_along_axis(vals, k, axis=-1)[..., 0]
    U1 = np.take_along_axis(np.stack([u for u, _ in cands], axis=-1), k, axis=-1)[..., 0]
    U2 = np.take_along_axis(np.stack([u for _, u in cands], axis=-1), k, axis=-1)[..., 0]
    n, T1, T2 = best.shape
    a = np.stack([np.broadcast_to(lo1 + U1, best.shape), np.broadcast_to(lo2 + U2, best.shape)], axis=-1)
    return best.reshape(n, T1 * T2), a.reshape(n, T1 * T2, 2)


def _exact_block(g, p, W, x, ticks):
    n, d = x.shape
    T = len(ticks)
    corners = np.array(list(itertools.product(ticks, repeat=d)))
    feet = x[:, None, :] - g.dt * corners[None, :, :]
    I = _interp_many(g, W, feet).reshape((n,) + (T,) * d)
    b = np.asarray(p.quadratic_center(x), dtype=float).reshape(n, d)
    if d == 1:
        return _rect_minima_1d(I, ticks, b, g.dt)
    return _rect_minima_2d(I, ticks, b, g.dt)


def _minimize_exact(g: GridSpec, p: MFGProblem, W: np.ndarray, x: np.ndarray):
    """Exact boxed minimiser for ``L = |a - b(x)|^2 / 2`` in one or two dimensions.

    Controls whose foot lands on a grid line (``a = k dx / dt``) split the
    box into rectangles on which the Q1 interpolant of the foot is bilinear
    in ``a`` (clamped feet included, since clamping happens on those same
    lines). On each rectangle the objective is bilinear plus a convex
    quadratic, so its minimum sits at the interior stationary point or on an
    edge, both available in closed form.
    """
    n, d = x.shape
    ticks = control_ticks(g, p.control_bound, n_scan=2, foot_ticks=True)
    R = (len(ticks) - 1) ** d
    step = max(1, _CHUNK // R)
    vals, ctrl = [], []
    for s in range(0, n, step):
        v, a = _exact_block(g, p, W, x[s:s + step], ticks)
        vals.append(v)
        ctrl.append(a)
    vals, ctrl = np.concatenate(vals), np.concatenate(ctrl)
    best = _lex_argmin(vals, ctrl)
    a = ctrl[np.arange(n), best]
    # uniqueness diagnostic: best rectangle minimum away from the winning rectangle
    shape = (len(ticks) - 1,) * d
    pos = np.array(np.unravel_index(np.arange(R), shape)).T
    far = np.abs(pos[None, :, :] - pos[best][:, None, :]).max(axis=-1) > 1
    f = vals[np.arange(n), best]
    gap = np.where(far.any(axis=1), np.where(far, vals, np.inf).min(axis=1) - f, np.inf)
    return a, gap


def minimize_controls(g: GridSpec, p: MFGProblem, v_next: np.ndarray, nodes=None, *, n_scan: int = 11,
                      tol: float = 1e-8, max_sweeps: int = 4, foot_ticks: bool = True,
                      guesses: bool = True, method: str = "auto") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boxed minimisation of the semi-Lagrangian objective at many nodes.

    ``method="auto"`` uses the exact rectangle-wise minimiser whenever the
    problem declares a ``quadratic_center`` and the dimension is at most 2;
    otherwise (or with ``method="scan"``) the search below is used.

    A lexicographic lattice scan over the control box (see
    :func:`control_ticks`) picks a starting point; ties within ``1e-12`` go
    to the lexicographically smallest control. Local refinement runs per-axis
    golden-section searches between neighbouring ticks down to ``tol``, and
    in two or more dimensions a compass search over axis and diagonal
    directions follows. With ``guesses`` the refinement is also started from
    ``DpH(x, 0)`` and ``DpH(x, grad v_next)``; those starts win only when
    strictly better by more than the tie tolerance.

    Returns:
        ``(controls, values, gap)`` with shapes ``(n, dim)``, ``(n,)``, ``(n,)``;
        ``gap`` is the value difference between the best lattice point and the
        best lattice point not adjacent to it (a uniqueness diagnostic).
    """
    W = np.asarray(v_next, dtype=float)
    idx = np.arange(g.n_nodes) if nodes is None else np.atleast_1d(nodes)
    x = g.nodes[idx]
    n, d = x.shape
    C = p.control_bound
    obj = _Objective(g, p, W, x)

    if method not in ("auto", "exact", "scan"):
        raise ValueError(f"unknown minimiser method {method!r}")
    exact_ok = p.quadratic_center is not None and d <= 2
    if method == "exact" and not exact_ok:
        raise ValueError("the exact minimiser needs a quadratic Lagrangian in dimension 1 or 2")
    if method != "scan" and exact_ok:
        a, gap = _minimize_exact(g, p, W, x)
        return a, obj(a), gap

    ticks = control_ticks(g, C, n_scan, foot_ticks)
    lattice = np.array(list(itertools.product(range(len(ticks)), repeat=d)))
    vals = np.empty((n, len(lattice)))
    for c, ij in enumerate(lattice):
        vals[:, c] = obj(np.broadcast_to(ticks[ij], (n, d)))
    vmin = vals.min(axis=1, keepdims=True)
    best = np.argmax(vals <= vmin + TIE_TOL, axis=1)
    a = ticks[lattice[best]].astype(float)
    f = vals[np.arange(n), best]

    far = np.abs(lattice[None, :, :] - lattice[best][:, None, :]).max(axis=-1) > 1
    gap = np.where(far.any(axis=1), np.where(far, vals, np.inf).min(axis=1) - f, np.inf)

    if not guesses:
        a, f = _refine(obj, a, f, ticks, tol, max_sweeps, C)
        return a, f, gap
    starts = [a] + _first_order_guesses(g, p, W, idx, x)
    S = len(starts)
    multi = _Objective(g, p, W, np.concatenate([x] * S))
    A = np.concatenate(starts)
    F = np.concatenate([f] + [obj(c) for c in starts[1:]])
    A, F = _refine(multi, A, F, ticks, tol, max_sweeps, C)
    A, F = A.reshape(S, n, d), F.reshape(S, n)
    # a guess replaces the scan start only when strictly better
    k = 1 + np.argmin(F[1:], axis=0)
    fk = F[k, np.arange(n)]
    use_guess = fk < F[0] - TIE_TOL
    pick = np.where(use_guess, k, 0)
    return A[pick, np.arange(n)], F[pick, np.arange(n)], gap


def minimize_cell(g: GridSpec, p: MFGProblem, v_next: np.ndarray, i: int, **kw) -> tuple[np.ndarray, float]:
    """Optimal control and optimal value of the semi-Lagrangian objective at node ``i``."""
    a, f, _ = minimize_controls(g, p, v_next, nodes=[i], **kw)
    return a[0], float(f[0])


def _record(stats, g, p, x, a, mass, gap):
    if stats is None:
        return
    feet = x - g.dt * a
    stats["clamped_feet"] = stats.get("clamped_feet", 0) + int(clamped(g, feet).sum())
    touch = np.max(np.abs(a), axis=-1) >= p.control_bound - 1e-9
    stats["boundary_controls"] = stats.get("boundary_controls", 0) + int(touch.sum())
    if mass is not None:
        stats["boundary_controls_with_mass"] = stats.get("boundary_controls_with_mass", 0) + int(
            (touch & (mass > 0)).sum())
    stats["min_uniqueness_gap"] = min(stats.get("min_uniqueness_gap", np.inf), float(np.min(gap)))


def hjb_step(g: GridSpec, p: MFGProblem, v_next: np.ndarray, m_k: np.ndarray, *, stats=None,
             **kw) -> tuple[np.ndarray, np.ndarray]:
    """One backward step: ``v_k = min_a {I[v_next](x - dt a) + dt L} + dt F(x, m_k)``."""
    a, f, gap = minimize_controls(g, p, v_next, **kw)
    _record(stats, g, p, g.nodes, a, m_k, gap)
    return f + g.dt * p.running_coupling(g, m_k), a


def solve_backward(g: GridSpec, p: MFGProblem, m: np.ndarray, *, stats=None, warn: bool = True,
                   **kw) -> tuple[np.ndarray, np.ndarray]:
    """Value field and optimal controls for a given density path.

    Args:
        g: grid.
        p: problem.
        m: density path ``(n_time, n_nodes)``.
        stats: optional dict collecting clamp and control-box counters.
        warn: emit :class:`ControlBoxWarning` when a control at a node carrying
            mass touches the box boundary.

    Returns:
        ``(v, q)`` of shapes ``(n_time, n_nodes)`` and ``(n_steps, n_nodes, dim)``.
    """
    m = np.asarray(m, dtype=float)
    local = {} if stats is None else stats
    before = local.get("boundary_controls_with_mass", 0)
    v = np.empty((g.n_time, g.n_nodes))
    q = np.empty((g.n_steps, g.n_nodes, g.dim))
    v[-1] = p.terminal_coupling(g, m[-1])
    for k in range(g.n_steps - 1, -1, -1):
        v[k], q[k] = hjb_step(g, p, v[k + 1], m[k], stats=local, **kw)
    if warn and local.get("boundary_controls_with_mass", 0) > before:
        warnings.warn(f"optimal controls reached the control box |a| = {p.control_bound} at nodes with mass",
                      ControlBoxWarning, stacklevel=2)
    return v, q


def evaluate_policy_value(g: GridSpec, p: MFGProblem, m: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Value of a fixed feedback ``q`` against density path ``m`` (no minimisation)."""
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    x = g.nodes
    v = np.empty((g.n_time, g.n_nodes))
    v[-1] = p.terminal_coupling(g, m[-1])
    for k in range(g.n_steps - 1, -1, -1):
        foot = x - g.dt * q[k]
        v[k] = (_interp_many(g, v[k + 1], foot) + g.dt * p.L(x, q[k])
                + g.dt * p.running_coupling(g, m[k]))
    return v
