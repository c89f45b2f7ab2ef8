"""MFG problem data and the built-in experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, asdict
from typing import Callable

import numpy as np

from .grid import GridSpec, gaussian_kernel, moment, mollified_density


class Coupling:
    """A coupling ``h(x, m)`` reading a grid density slice.

    Subclasses implement :meth:`nodal` (values at every node, the hot path)
    and may override :meth:`__call__` for arbitrary points.
    """

    depends_on_density = True

    def nodal(self, g: GridSpec, m: np.ndarray) -> np.ndarray:
        return self(g.nodes, m, g)

    def __call__(self, x, m, g: GridSpec) -> np.ndarray:
        raise NotImplementedError


class ZeroCoupling(Coupling):
    depends_on_density = False

    def nodal(self, g, m):
        return np.zeros(g.n_nodes)

    def __call__(self, x, m, g):
        return np.zeros(np.asarray(x).reshape(-1, g.dim).shape[0])


class ConstantCoupling(Coupling):
    depends_on_density = False

    def __init__(self, value: float):
        self.value = float(value)

    def nodal(self, g, m):
        return np.full(g.n_nodes, self.value)

    def __call__(self, x, m, g):
        return np.full(np.asarray(x).reshape(-1, g.dim).shape[0], self.value)


class PotentialCoupling(Coupling):
    """Density-independent coupling ``h(x) = phi(x)``."""

    depends_on_density = False

    def __init__(self, phi: Callable[[np.ndarray], np.ndarray]):
        self.phi = phi

    def __call__(self, x, m, g):
        return np.asarray(self.phi(np.asarray(x, dtype=float).reshape(-1, g.dim)), dtype=float)


class MeanDistanceCoupling(Coupling):
    """``h(x, m) = |x - mean(m)|^2 / 2``."""

    def __call__(self, x, m, g):
        pts = np.asarray(x, dtype=float).reshape(-1, g.dim)
        mean = np.atleast_1d(moment(g, m))
        return 0.5 * ((pts - mean) ** 2).sum(axis=-1)


class TargetAversionCoupling(Coupling):
    """``h(x, m) = lam * min(|x - target|^2, R) + (rho_sigma * m)(x)``."""

    def __init__(self, lam: float, target, truncation: float = 9.0, sigma: float = 0.5):
        self.lam = float(lam)
        self.target = np.atleast_1d(np.asarray(target, dtype=float))
        self.truncation = float(truncation)
        self.sigma = float(sigma)

    def _target_term(self, pts):
        d2 = ((pts - self.target) ** 2).sum(axis=-1)
        return self.lam * np.minimum(d2, self.truncation)

    def nodal(self, g, m):
        return self._target_term(g.nodes) + mollified_density(g, m, self.sigma)

    def __call__(self, x, m, g):
        pts = np.asarray(x, dtype=float).reshape(-1, g.dim)
        nodes = g.nodes
        mass = np.asarray(m, dtype=float)
        support = mass > 0
        r2 = ((pts[:, None, :] - nodes[None, support, :]) ** 2).sum(axis=-1)
        kern = np.where(r2 <= (4 * self.sigma) ** 2 + 1e-12, gaussian_kernel(r2, self.sigma, g.dim), 0.0)
        return self._target_term(pts) + kern @ mass[support]


def gaussian_density(mean, var) -> Callable[[np.ndarray], np.ndarray]:
    """Gaussian density with diagonal covariance ``var`` (scalar or per axis)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.broadcast_to(np.asarray(var, dtype=float), mean.shape)

    def m0(x):
        pts = np.asarray(x, dtype=float).reshape(-1, mean.size)
        z = ((pts - mean) ** 2 / var).sum(axis=-1)
        return np.exp(-0.5 * z) / np.sqrt((2 * np.pi) ** mean.size * np.prod(var))

    return m0


def _bump_mass(dim: int) -> float:
    # integral of (1 - 4|x|^2)^3 over the ball of radius 1/2
    if dim == 1:
        return 16.0 / 35.0
    if dim == 2:
        return math.pi / 16.0
    raise ValueError("two-bump density is defined for dim 1 or 2")


def two_bump_density(dim: int, center=None) -> Callable[[np.ndarray], np.ndarray]:
    """Normalised sum of two ``(1 - 4|x|^2)^3`` bumps at ``+center`` and ``-center``.

    ``center`` defaults to the all-ones vector.
    """
    c = np.ones(dim) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    norm = 2.0 * _bump_mass(dim)

    def bump(pts):
        r2 = (pts**2).sum(axis=-1)
        return np.where(r2 <= 0.25, (1.0 - 4.0 * r2) ** 3, 0.0)

    def m0(x):
        pts = np.asarray(x, dtype=float).reshape(-1, dim)
        return (bump(pts - c) + bump(pts + c)) / norm

    return m0


def quadratic_lagrangian(x, a):
    return 0.5 * (np.asarray(a) ** 2).sum(axis=-1)


def zero_center(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def identity_feedback(x, p):
    return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class MFGProblem:
    """Data of one first-order MFG instance.

    ``L(x, a)`` and ``DpH(x, p)`` are vectorised over a leading node axis:
    ``x`` is ``(n, dim)``, ``a``/``p`` are ``(n, dim)``. ``F`` and ``G`` are
    :class:`Coupling` objects. ``m0`` maps ``(n, dim)`` points to densities.

    ``quadratic_center`` is optional structure: when set, it promises
    ``L(x, a) = |a - quadratic_center(x)|^2 / 2`` and the HJB solver switches
    to an exact cell-by-cell minimiser.
    """

    dim: int
    L: Callable[[np.ndarray, np.ndarray], np.ndarray]
    DpH: Callable[[np.ndarray, np.ndarray], np.ndarray]
    F: Coupling
    G: Coupling
    m0: Callable[[np.ndarray], np.ndarray]
    control_bound: float
    horizon: float
    domain: tuple[float, float] = (-2.0, 2.0)
    name: str = "custom"
    params: dict = field(default_factory=dict)
    quadratic_center: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.control_bound > 0:
            raise ValueError("control_bound (C_H) must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def couplings_depend_on_density(self) -> bool:
        return self.F.depends_on_density or self.G.depends_on_density

    def grid(self, dx: float, dt: float | None = None) -> GridSpec:
        lo, hi = self.domain
        return GridSpec.uniform(self.dim, dx, self.horizon, lo, hi, dt=dt)

    def running_coupling(self, g: GridSpec, m: np.ndarray) -> np.ndarray:
        return self.F.nodal(g, m)

    def terminal_coupling(self, g: GridSpec, m: np.ndarray) -> np.ndarray:
        return self.G.nodal(g, m)


def lq_gaussian(mu0=0.1, sigma0=0.105, horizon=0.25, dim=1, control_bound=2.0, domain=(-2.0, 2.0)) -> MFGProblem:
    """Quadratic Hamiltonian with mean-tracking coupling and Gaussian initial law."""
    if np.any(np.asarray(sigma0) <= 0):
        raise ValueError("sigma0 must be positive")
    return MFGProblem(
        dim=dim,
        L=quadratic_lagrangian,
        DpH=identity_feedback,
        F=MeanDistanceCoupling(),
        G=ZeroCoupling(),
        m0=gaussian_density(np.broadcast_to(mu0, (dim,)), sigma0),
        control_bound=control_bound,
        horizon=horizon,
        domain=tuple(domain),
        name="lq",
        params={"mu0": mu0, "sigma0": sigma0},
        quadratic_center=zero_center,
    )


def target_aversion_1d(lam=2.5, horizon=4.0, target=0.0, truncation=9.0, sigma=0.5,
                       control_bound=6.0, domain=(-3.0, 3.0)) -> MFGProblem:
    """Target attraction plus crowd aversion in one dimension."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return MFGProblem(
        dim=1,
        L=quadratic_lagrangian,
        DpH=identity_feedback,
        F=TargetAversionCoupling(lam, target, truncation, sigma),
        G=ZeroCoupling(),
        m0=two_bump_density(1),
        control_bound=control_bound,
        horizon=horizon,
        domain=tuple(domain),
        name="aversion1d",
        params={"lam": lam, "target": target, "truncation": truncation, "sigma": sigma},
        quadratic_center=zero_center,
    )


def drift_field(gamma: float, variant: str = "literal") -> Callable[[np.ndarray], np.ndarray]:
    """Planar drift ``b(x)``.

    ``"literal"`` is ``gamma * (-x2, x2)``; ``"rotation"`` is the solid-body
    field ``gamma * (-x2, x1)``.
    """
    if variant not in ("literal", "rotation"):
        raise ValueError(f"unknown drift variant {variant!r}")

    def b(x):
        pts = np.asarray(x, dtype=float).reshape(-1, 2)
        second = pts[:, 1] if variant == "literal" else pts[:, 0]
        return gamma * np.stack([-pts[:, 1], second], axis=-1)

    return b


def target_aversion_2d(lam=2.0, gamma=2.5, horizon=2.5, target=(0.0, 0.0), truncation=9.0, sigma=0.5,
                       control_bound=6.0, domain=(-3.0, 3.0), drift="literal", bump_center=(1.0, 1.0)) -> MFGProblem:
    """Target attraction plus crowd aversion in two dimensions with a drift."""
    if lam <= 0 or gamma <= 0:
        raise ValueError("lam and gamma must be positive")
    b = drift_field(gamma, drift)

    def L(x, a):
        return 0.5 * ((np.asarray(a) - b(x)) ** 2).sum(axis=-1)

    def DpH(x, p):
        return np.asarray(p, dtype=float) + b(x)

    return MFGProblem(
        dim=2,
        L=L,
        DpH=DpH,
        F=TargetAversionCoupling(lam, target, truncation, sigma),
        G=ZeroCoupling(),
        m0=two_bump_density(2, bump_center),
        control_bound=control_bound,
        horizon=horizon,
        domain=tuple(domain),
        name="aversion2d",
        params={"lam": lam, "gamma": gamma, "target": list(target), "truncation": truncation,
                "sigma": sigma, "drift": drift, "bump_center": list(bump_center)},
        quadratic_center=b,
    )


def running_cost(p: MFGProblem, g: GridSpec, i: int, a, m: np.ndarray) -> float:
    """Per-step cost ``dt * (L(x_i, a) + F(x_i, m))`` of node ``i``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.max(np.abs(a)) > p.control_bound + 1e-12:
        raise ValueError(f"control {a} outside the box of radius {p.control_bound}")
    x = g.nodes[i:i + 1]
    lag = float(p.L(x, a.reshape(1, -1))[0])
    coupling = float(p.F(x, m, g)[0])
    return g.dt * (lag + coupling)


@dataclass
class ProblemConfig:
    """Serializable selector for the built-in problems."""

    name: str = "lq"
    lam: float | None = None
    truncation: float = 9.0
    sigma: float = 0.5
    target: float | list[float] = 0.0
    gamma: float = 2.5
    mu0: float = 0.1
    sigma0: float = 0.105
    horizon: float | None = None
    domain: tuple[float, float] | None = None
    control_bound: float | None = None
    drift: str = "literal"

    def __post_init__(self):
        for attr in ("lam", "truncation", "sigma", "gamma", "sigma0"):
            val = getattr(self, attr)
            if val is not None and not val > 0:
                raise ValueError(f"{attr} must be positive, got {val}")
        if self.name not in BUILTINS:
            raise ValueError(f"unknown problem {self.name!r}; choose from {sorted(BUILTINS)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown problem keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("domain") is not None:
            data["domain"] = tuple(data["domain"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["domain"] is not None:
            out["domain"] = list(out["domain"])
        return out

    def build(self) -> MFGProblem:
        opt = {}
        if self.horizon is not None:
            opt["horizon"] = self.horizon
        if self.domain is not None:
            opt["domain"] = self.domain
        if self.control_bound is not None:
            opt["control_bound"] = self.control_bound
        if self.name == "lq":
            return lq_gaussian(self.mu0, self.sigma0, **opt)
        if self.name == "aversion1d":
            lam = 2.5 if self.lam is None else self.lam
            return target_aversion_1d(lam, target=self.target, truncation=self.truncation, sigma=self.sigma, **opt)
        lam = 2.0 if self.lam is None else self.lam
        target = np.broadcast_to(np.asarray(self.target, dtype=float), (2,))
        return target_aversion_2d(lam, self.gamma, target=tuple(target), truncation=self.truncation,
                                  sigma=self.sigma, drift=self.drift, **opt)


BUILTINS = ("lq", "aversion1d", "aversion2d")
