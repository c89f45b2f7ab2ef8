"""Experiment orchestration shared by the command line and the acceptance tests."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .fixedpoint import FixedPointResult, SolverConfig, adlvi, dlvi, dpi, err_density, err_density_analytic, err_value
from .grid import GridSpec, local_maxima
from .hjb import ControlBoxWarning
from .oracle import exact_density, exact_value, lq_solve, residual_check
from .problem import MFGProblem, ProblemConfig

ALGORITHMS = ("dlvi", "dpi", "adlvi")
ORACLE_GATE = 1e-6


@dataclass
class RunConfig:
    """Everything needed to reproduce one invocation; serialised into every artifact."""

    problem: ProblemConfig = field(default_factory=ProblemConfig)
    dx: float = 0.1
    dt: float | None = None
    tol: float = 1e-3
    max_iter: int = 500
    algo: str = "dlvi"
    out: str = "slmfg-out"
    snapshot_stride: int = 10
    seed: int = 0
    jobs: int = 1
    trials: int = 1000
    dx_list: list[float] = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])

    def __post_init__(self):
        if isinstance(self.problem, dict):
            self.problem = ProblemConfig.from_dict(self.problem)
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {list(ALGORITHMS)}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        if self.max_iter < 2:
            raise ValueError("max_iter must be >= 2")
        self.dx_list = [float(d) for d in self.dx_list]
        if not self.dx_list or any(not d > 0 for d in self.dx_list):
            raise ValueError("dx_list must hold positive steps")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["problem"] = self.problem.to_dict()
        return out

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iter=self.max_iter)


def solve(p: MFGProblem, g: GridSpec, algo: str, cfg: SolverConfig) -> FixedPointResult:
    with warnings.catch_warnings():
        # box contacts are recorded in the diagnostics counters instead
        warnings.simplefilter("ignore", ControlBoxWarning)
        if algo == "dlvi":
            return dlvi(g, p, cfg)
        if algo == "dpi":
            return dpi(g, p, cfg)
        if algo == "adlvi":
            return adlvi(g, p, cfg)
    raise ValueError(f"unknown algorithm {algo!r}")


def oracle_gate(mu0: float, sigma0: float, horizon: float, n_points: int = 1000, seed: int = 0):
    """Solve the LQ reference and return ``(solution, max residual)`` over random interior points."""
    sol = lq_solve(mu0, sigma0, horizon)
    rng = np.random.default_rng(seed)
    h = 4 * horizon / 10_000
    x = rng.uniform(-1.9, 1.9, n_points)
    t = rng.uniform(h, horizon - h, n_points)
    return sol, residual_check(sol, x, t)


def lq_errors(g: GridSpec, res: FixedPointResult, sol) -> tuple[float, float]:
    """``(E1, E_inf)`` of a computed LQ solution against the analytic pair."""
    x = g.nodes[:, 0]
    e1 = err_density_analytic(g, res.m, exact_density(sol, x, g.horizon))
    einf = err_value(res.v, np.stack([exact_value(sol, x, 0.0)] * g.n_time))
    return e1, einf


def observed_orders(errors: list[float]) -> list[float]:
    """``log2`` of successive error ratios (one fewer than the errors)."""
    return [math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(errors, errors[1:])]


def _table_row(args):
    pcfg, dx, dt, scfg, algo = args
    p = pcfg.build()
    g = p.grid(dx, dt)
    sol = lq_solve(pcfg.mu0, pcfg.sigma0, p.horizon)
    res = solve(p, g, algo, scfg)
    e1, einf = lq_errors(g, res, sol)
    return {"dx": dx, "dt": g.dt, "n_steps": g.n_steps, "E1": e1, "Einf": einf,
            "iterations": res.diagnostics.iterations, "converged": res.diagnostics.converged,
            "wall_time": res.diagnostics.wall_time}


class OracleGateError(RuntimeError):
    pass


def convergence_table(cfg: RunConfig) -> dict:
    """LQ error table over ``cfg.dx_list`` with observed orders, gated by the oracle residual."""
    if cfg.problem.name != "lq":
        raise ValueError("convergence-table needs the 'lq' problem (it has an analytic solution)")
    p = cfg.problem.build()
    _, resid = oracle_gate(cfg.problem.mu0, cfg.problem.sigma0, p.horizon, seed=cfg.seed)
    if not resid < ORACLE_GATE:
        raise OracleGateError(f"oracle residual {resid:.3e} exceeds {ORACLE_GATE:.0e}")
    jobs = [(cfg.problem, dx, cfg.dt, cfg.solver_config(), cfg.algo) for dx in cfg.dx_list]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_table_row, jobs))
    else:
        rows = [_table_row(j) for j in jobs]
    return {"oracle_residual": resid, "rows": rows,
            "order_E1": observed_orders([r["E1"] for r in rows]),
            "order_Einf": observed_orders([r["Einf"] for r in rows])}


def _compare_one(args):
    pcfg, dx, dt, scfg, algo = args
    p = pcfg.build()
    return solve(p, p.grid(dx, dt), algo, scfg)


def compare(cfg: RunConfig) -> tuple[dict, FixedPointResult, FixedPointResult]:
    """DLVI against ADLVI on identical settings.

    Runs sequentially unless ``cfg.jobs > 1``; concurrent runs share the
    machine, which makes the two wall times less comparable.
    """
    jobs = [(cfg.problem, cfg.dx, cfg.dt, cfg.solver_config(), a) for a in ("dlvi", "adlvi")]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=2) as pool:
            ref, acc = pool.map(_compare_one, jobs)
    else:
        ref, acc = (_compare_one(j) for j in jobs)
    summary = {
        "E1": err_density(ref.m, acc.m),
        "Einf": err_value(ref.v, acc.v),
        "dlvi": {"iterations": ref.diagnostics.iterations, "wall_time": ref.diagnostics.wall_time,
                 "converged": ref.diagnostics.converged},
        "adlvi": {"iterations": list(acc.diagnostics.iterations), "wall_time": acc.diagnostics.wall_time,
                  "converged": acc.diagnostics.converged},
    }
    return summary, ref, acc


def terminal_modes(g: GridSpec, m: np.ndarray, rel_height: float = 0.05) -> list[list[float]]:
    """Coordinates of the local maxima of the terminal density slice."""
    return [g.nodes[i].tolist() for i in local_maxima(np.asarray(m)[-1], g.shape, rel_height)]


def run_summary(cfg: RunConfig, res: FixedPointResult) -> dict:
    g = res.grid
    diag = res.diagnostics.to_dict()
    diag["stages"].pop("next_policy", None)
    out = {
        "config": cfg.to_dict(),
        "grid": g.to_dict(),
        "algorithm": cfg.algo,
        "iterations": diag["iterations"],
        "converged": res.diagnostics.converged,
        "stop_reason": res.diagnostics.stop_reason,
        "wall_time": res.diagnostics.wall_time,
        "final_errors": diag["history"][-1] if diag["history"] else None,
        "terminal_modes": terminal_modes(g, res.m),
        "diagnostics": diag,
    }
    if cfg.algo == "adlvi":
        out["coarse_iterations"], out["fine_iterations"] = res.diagnostics.iterations
    if cfg.problem.name == "lq":
        sol, resid = oracle_gate(cfg.problem.mu0, cfg.problem.sigma0, g.horizon, seed=cfg.seed)
        if resid < ORACLE_GATE:
            e1, einf = lq_errors(g, res, sol)
            out["oracle"] = {"residual": resid, "E1": e1, "Einf": einf}
        else:
            out["oracle"] = {"residual": resid, "error": "residual gate failed; no comparison"}
    return out

