"""Uniform space-time grids, Q1 interpolation and grid densities.

Conventions used throughout the package:

* a *space field* is a 1-D array with one entry per spatial node; for ``dim=2``
  nodes are flattened in C order of the ``(n_1, n_2)`` node lattice;
* a *value field* / *density path* is an array of shape ``(n_time, n_nodes)``
  with ``n_time = n_steps + 1``;
* a *control field* has shape ``(n_steps, n_nodes, dim)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, signal

# Relative distance below which a query coordinate is snapped onto a grid line.
_SNAP = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time lattice on a truncated box.

    ``dt`` is the requested step; the effective step is ``horizon / n_steps``
    with ``n_steps = floor(horizon / dt)`` (at least 1), so the effective step
    is never smaller than the requested one and ``n_steps * dt == horizon``.
    """

    dim: int
    dx: float
    dt: float
    horizon: float
    domain_lo: tuple[float, ...]
    domain_hi: tuple[float, ...]
    n_steps: int = field(init=False)
    shape: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not (self.dx > 0 and self.dt > 0 and self.horizon > 0):
            raise ValueError("dx, dt and horizon must be positive")
        lo = tuple(float(v) for v in np.broadcast_to(self.domain_lo, (self.dim,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.domain_hi, (self.dim,)))
        shape = []
        for a, b in zip(lo, hi):
            n = int(math.floor((b - a) / self.dx + 1e-9)) + 1
            if n < 2:
                raise ValueError(f"box [{a}, {b}] holds fewer than 2 nodes at dx={self.dx}")
            shape.append(n)
        n_steps = max(1, int(math.floor(self.horizon / self.dt + 1e-9)))
        object.__setattr__(self, "domain_lo", lo)
        object.__setattr__(self, "domain_hi", hi)
        object.__setattr__(self, "shape", tuple(shape))
        object.__setattr__(self, "n_steps", n_steps)
        object.__setattr__(self, "dt", self.horizon / n_steps)

    @classmethod
    def uniform(cls, dim, dx, horizon, lo, hi, dt=None):
        """Build a grid with the default time step ``dt = dx**(2/3) / 2``."""
        if dt is None:
            dt = default_time_step(dx)
        return cls(dim, dx, dt, horizon, tuple([lo] * dim), tuple([hi] * dim))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_time(self) -> int:
        return self.n_steps + 1

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def axes(self) -> list[np.ndarray]:
        return [lo + self.dx * np.arange(n) for lo, n in zip(self.domain_lo, self.shape)]

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_time)

    @property
    def upper(self) -> np.ndarray:
        """Coordinate of the last node on each axis (may sit below ``domain_hi``)."""
        return np.asarray(self.domain_lo) + self.dx * (np.asarray(self.shape) - 1)

    def time_index(self, t: float) -> int:
        if t < -1e-12 or t > self.horizon + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return int(np.clip(round(t / self.dt), 0, self.n_steps))

    def same_as(self, other: "GridSpec") -> bool:
        return (
            self.dim == other.dim
            and self.shape == other.shape
            and self.n_steps == other.n_steps
            and np.isclose(self.dx, other.dx)
            and np.isclose(self.dt, other.dt)
            and np.allclose(self.domain_lo, other.domain_lo)
        )

    def with_steps(self, dx: float, dt: float) -> "GridSpec":
        return GridSpec(self.dim, dx, dt, self.horizon, self.domain_lo, self.domain_hi)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "dx": self.dx,
            "dt": self.dt,
            "horizon": self.horizon,
            "n_steps": self.n_steps,
            "domain_lo": list(self.domain_lo),
            "domain_hi": list(self.domain_hi),
            "shape": list(self.shape),
        }


def default_time_step(dx: float) -> float:
    """Inverse-CFL time step ``dx**(2/3) / 2`` used by every experiment."""
    return dx ** (2.0 / 3.0) / 2.0


def _as_points(g: GridSpec, x) -> tuple[np.ndarray, bool]:
    """Normalise a query to ``(P, dim)`` points and flag scalar queries.

    In 1-D a scalar is one point and a flat array is a batch; in higher
    dimensions a flat array of length ``dim`` is one point.
    """
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 0 or (pts.ndim == 1 and g.dim > 1)
    if g.dim == 1 and pts.ndim <= 1:
        pts = pts.reshape(-1, 1)
    else:
        pts = pts.reshape(-1, pts.shape[-1])
    if pts.shape[-1] != g.dim:
        raise ValueError(f"points have dimension {pts.shape[-1]}, grid has {g.dim}")
    return pts, scalar


def q1_stencil(g: GridSpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Q1 stencil.

    Args:
        g: grid.
        points: array ``(..., dim)`` of query points; clamped into the box.

    Returns:
        ``(index, weight)`` arrays of shape ``(..., 2**dim)`` holding flat node
        indices and the tensor-product hat weights.
    """
    pts = np.asarray(points, dtype=float)
    lead = pts.shape[:-1]
    lo = np.asarray(g.domain_lo)
    shape = np.asarray(g.shape)
    s = (pts - lo) / g.dx
    s = np.clip(s, 0.0, shape - 1)
    r = np.rint(s)
    s = np.where(np.abs(s - r) < _SNAP, r, s)
    base = np.minimum(np.floor(s), shape - 2).astype(np.int64)
    frac = s - base
    if g.dim == 1:
        b0, f0 = base[..., 0], frac[..., 0]
        return np.stack([b0, b0 + 1], axis=-1), np.stack([1.0 - f0, f0], axis=-1)

    strides = np.array([int(np.prod(g.shape[a + 1:])) for a in range(g.dim)], dtype=np.int64)
    n_corner = 2**g.dim
    index = np.empty(lead + (n_corner,), dtype=np.int64)
    weight = np.empty(lead + (n_corner,), dtype=float)
    for c, bits in enumerate(itertools.product((0, 1), repeat=g.dim)):
        b = np.asarray(bits)
        index[..., c] = ((base + b) * strides).sum(axis=-1)
        w = np.where(b == 1, frac, 1.0 - frac)
        weight[..., c] = np.prod(w, axis=-1)
    return index, weight


def clamped(g: GridSpec, points: np.ndarray) -> np.ndarray:
    """Boolean mask of query points lying outside the node box."""
    pts = np.asarray(points, dtype=float)
    lo = np.asarray(g.domain_lo)
    tol = _SNAP * g.dx
    return np.any((pts < lo - tol) | (pts > g.upper + tol), axis=-1)


def q1_weights(g: GridSpec, x) -> list[tuple[int, float]]:
    """Nonzero Q1 basis values at one point as ``(flat node index, weight)`` pairs."""
    pt, _ = _as_points(g, x)
    if pt.shape[0] != 1:
        raise ValueError("q1_weights takes a single point; use q1_stencil for batches")
    index, weight = q1_stencil(g, pt)
    pairs: dict[int, float] = {}
    for i, w in zip(index[0], weight[0]):
        if w > 0.0:
            pairs[int(i)] = pairs.get(int(i), 0.0) + float(w)
    return sorted(pairs.items())


def interpolate(g: GridSpec, field_values: np.ndarray, x) -> np.ndarray | float:
    """Evaluate the Q1 interpolant of a space field at one or many points."""
    W = np.asarray(field_values, dtype=float)
    if W.shape != (g.n_nodes,):
        raise ValueError(f"field has shape {W.shape}, expected ({g.n_nodes},)")
    pts, scalar = _as_points(g, x)
    index, weight = q1_stencil(g, pts)
    out = (W[index] * weight).sum(axis=-1)
    if scalar:
        return float(out[0])
    return out


def extend_value(g: GridSpec, v: np.ndarray, x, t: float):
    """Space-time extension: interpolate the slice at level ``ceil(t / dt)``."""
    if t < -1e-12 or t > g.horizon + 1e-12:
        raise ValueError(f"time {t} outside [0, {g.horizon}]")
    k = int(math.ceil(t / g.dt - 1e-9))
    k = min(max(k, 0), g.n_steps)
    return interpolate(g, np.asarray(v)[k], x)


def cell_index(g: GridSpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat index of the cell ``E_i`` containing each point and an inside mask."""
    pts = np.asarray(points, dtype=float)
    lo = np.asarray(g.domain_lo)
    s = (pts - lo) / g.dx
    idx = np.floor(s + 0.5).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(g.shape)), axis=-1)
    idx = np.clip(idx, 0, np.asarray(g.shape) - 1)
    strides = np.array([int(np.prod(g.shape[a + 1:])) for a in range(g.dim)], dtype=np.int64)
    return (idx * strides).sum(axis=-1), inside


def extend_density(g: GridSpec, m: np.ndarray, x, t: float):
    """Piecewise-constant density of the path ``m`` at ``(x, t)``.

    Uses the slice ``floor(t / dt)`` (the last slice at ``t = T``); points
    outside every cell get zero.
    """
    if t < -1e-12 or t > g.horizon + 1e-12:
        raise ValueError(f"time {t} outside [0, {g.horizon}]")
    k = min(int(math.floor(t / g.dt + 1e-9)), g.n_steps)
    pts, scalar = _as_points(g, x)
    flat, inside = cell_index(g, pts)
    out = np.where(inside, np.asarray(m)[k][flat] / g.cell_volume, 0.0)
    return float(out[0]) if scalar else out


def project_initial_density(g: GridSpec, m0: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Cell masses of an initial density by midpoint quadrature, renormalised to 1."""
    raw = np.asarray(m0(g.nodes), dtype=float).reshape(g.n_nodes) * g.cell_volume
    if np.any(raw < 0):
        raise ValueError("initial density takes negative values on the grid")
    total = raw.sum()
    if not total > 0:
        raise ValueError("initial density has no mass on the grid nodes")
    return raw / total


def moment(g: GridSpec, m: np.ndarray) -> np.ndarray | float:
    """First moment ``sum_i x_i m_i`` of a density slice."""
    mean = np.asarray(m, dtype=float) @ g.nodes
    return float(mean[0]) if g.dim == 1 else mean


def gaussian_kernel(r2: np.ndarray, sigma: float, dim: int) -> np.ndarray:
    """Scaled standard Gaussian ``rho_sigma`` evaluated at squared radius ``r2``."""
    return np.exp(-0.5 * r2 / sigma**2) / ((2.0 * np.pi) ** (dim / 2.0) * sigma**dim)


def _kernel_offsets(g: GridSpec, radius: float) -> tuple[int, np.ndarray]:
    h = int(math.floor(radius / g.dx + 1e-9))
    off = np.arange(-h, h + 1) * g.dx
    mesh = np.meshgrid(*([off] * g.dim), indexing="ij")
    return h, np.stack(mesh, axis=-1)


def mollified_density(g: GridSpec, m: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing of a density slice evaluated at every node.

    Mass is treated as atoms at cell centres; the kernel is cut at radius
    ``4 * sigma`` without renormalisation.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, off = _kernel_offsets(g, 4.0 * sigma)
    r2 = (off**2).sum(axis=-1)
    kern = np.where(r2 <= (4.0 * sigma) ** 2 + 1e-12, gaussian_kernel(r2, sigma, g.dim), 0.0)
    mass = np.asarray(m, dtype=float).reshape(g.shape)
    out = signal.convolve(mass, kern, mode="full", method="direct")
    sl = tuple(slice(h, h + n) for n in g.shape)
    return out[sl].ravel()


def mollified_gradient(g: GridSpec, v_slice: np.ndarray, eps: float) -> np.ndarray:
    """Gradient of the Gaussian-mollified interpolant of ``v_slice`` at every node.

    Quadrature of ``(D rho_eps * I[v])(x_i)`` on the grid nodes with the kernel
    cut at radius ``4 * eps``. Beyond the box the interpolant is the clamped
    (edge) extension. Each derivative stencil is rescaled so that its discrete
    first moment is exactly one; affine data then give their slope at every
    node whose stencil stays inside the box.

    Returns:
        Array ``(n_nodes, dim)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    h, off = _kernel_offsets(g, 4.0 * eps)
    r2 = (off**2).sum(axis=-1)
    rho = np.where(r2 <= (4.0 * eps) ** 2 + 1e-12, gaussian_kernel(r2, eps, g.dim), 0.0)
    padded = np.pad(np.asarray(v_slice, dtype=float).reshape(g.shape), h, mode="edge")
    grads = []
    for a in range(g.dim):
        # D rho(y) = -y / eps^2 rho(y); convolution sums D rho(x_i - x_j) v_j.
        drho = -off[..., a] / eps**2 * rho * g.cell_volume
        drho /= -(drho * off[..., a]).sum()
        grads.append(signal.convolve(padded, drho, mode="valid", method="direct").ravel())
    return np.stack(grads, axis=-1)


def refine_factor(coarse: float, fine: float) -> int:
    ratio = coarse / fine
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"coarse step {coarse} is not an integer multiple of {fine}")
    return k


def local_maxima(values: np.ndarray, shape: Sequence[int], rel_height: float = 0.05) -> list[int]:
    """Flat indices of strict-ish local maxima above ``rel_height * max``.

    Plateaus are counted once. Used to count modes of emitted densities.
    """
    arr = np.asarray(values, dtype=float).reshape(tuple(shape))
    floor = rel_height * arr.max()
    footprint = np.ones((3,) * arr.ndim, dtype=bool)
    peak = (ndimage.maximum_filter(arr, footprint=footprint, mode="constant", cval=-np.inf) == arr) & (arr > floor)
    labels, n = ndimage.label(peak, structure=footprint)
    out = []
    for lab in range(1, n + 1):
        out.append(int(np.flatnonzero(labels.ravel() == lab)[0]))
    return out
