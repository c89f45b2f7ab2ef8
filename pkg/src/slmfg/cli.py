"""Command-line front end: ``slmfg {run,convergence-table,compare,verify}``.

Exit codes: 0 success, 1 invalid input, 2 non-convergence, 3 property failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments as ex
from .problem import BUILTINS
from .properties import PROPERTIES, run_property, sign_flipped_ce_step
from .transport import ce_step

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_PROPERTY = 0, 1, 2, 3
FAULTS = {"none": ce_step, "ce-sign": sign_flipped_ce_step}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(multi_dx: bool = False) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON run configuration; flags override its values")
    if multi_dx:
        p.add_argument("--dx", type=float, nargs="+", help="space steps, one table row each")
    else:
        p.add_argument("--dx", type=float, help="space step")
    p.add_argument("--dt", type=float, help="time step (default dx**(2/3)/2)")
    p.add_argument("--tol", type=float, help="stopping tolerance (default 1e-3)")
    p.add_argument("--algo", choices=ex.ALGORITHMS, help="fixed-point algorithm")
    p.add_argument("--problem", choices=BUILTINS, help="built-in problem")
    p.add_argument("--lambda", dest="lam", type=float, help="target weight of the aversion problems")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--jobs", type=int, help="worker processes for independent rows")
    p.add_argument("--snapshot-stride", type=int, help="write every n-th density level")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-iteration errors")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slmfg", description="Semi-Lagrangian mean field game solver.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[_common()], help="solve one configuration and write artifacts")
    sub.add_parser("convergence-table", parents=[_common(multi_dx=True)],
                   help="LQ errors against the analytic solution over several dx")
    sub.add_parser("compare", parents=[_common()], help="DLVI against ADLVI on the same settings")
    v = sub.add_parser("verify", parents=[_common()], help="randomised structure-preservation suites")
    v.add_argument("--trials", type=int, help="random instances per property (default 1000)")
    v.add_argument("--property", action="append", choices=[p.name for p in PROPERTIES],
                   help="restrict to the named property (repeatable)")
    v.add_argument("--inject-fault", choices=sorted(FAULTS), default="none",
                   help="swap in a deliberately broken transport step")
    return parser


def resolve_config(args) -> ex.RunConfig:
    """File values first, then command-line overrides."""
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
    problem = dict(data.get("problem") or {})
    if args.problem is not None and args.problem != problem.get("name"):
        problem = {"name": args.problem}
    if args.lam is not None:
        problem["lam"] = args.lam
    data["problem"] = problem
    if isinstance(args.dx, list):
        data["dx_list"] = args.dx
    elif args.dx is not None:
        data["dx"] = args.dx
    for key, flag in (("dt", "dt"), ("tol", "tol"), ("algo", "algo"), ("seed", "seed"), ("jobs", "jobs"),
                      ("snapshot_stride", "snapshot_stride"), ("trials", "trials")):
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if args.out is not None:
        data["out"] = str(args.out)
    try:
        cfg = ex.RunConfig.from_dict(data)
        if cfg.problem.name == "lq" and cfg.problem.lam is not None:
            raise ValueError("lambda only applies to the aversion problems")
        p = cfg.problem.build()
        for dx in [cfg.dx, *cfg.dx_list]:
            p.grid(dx, cfg.dt)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    return cfg


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default, allow_nan=False) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o) if math.isfinite(o) else None
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by ``None`` so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _csv_header(fh, cfg: ex.RunConfig) -> None:
    """Provenance comment line holding the resolved config as compact JSON."""
    fh.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")


def write_snapshots(path: Path, cfg: ex.RunConfig, g, m: np.ndarray) -> list[int]:
    """Density (mass / cell volume) at every ``stride``-th level and the last one."""
    levels = sorted(set(range(0, g.n_time, cfg.snapshot_stride)) | {g.n_steps})
    axes = ["x", "y", "z"][: g.dim]
    with path.open("w", newline="") as fh:
        _csv_header(fh, cfg)
        w = csv.writer(fh)
        w.writerow(["level", "t", *axes, "density"])
        for k in levels:
            for node, mass in zip(g.nodes, m[k]):
                w.writerow([k, repr(float(g.times[k])), *(repr(float(c)) for c in node),
                            repr(float(mass / g.cell_volume))])
    return levels


def write_value(path: Path, cfg: ex.RunConfig, g, v: np.ndarray) -> None:
    axes = ["x", "y", "z"][: g.dim]
    with path.open("w", newline="") as fh:
        _csv_header(fh, cfg)
        w = csv.writer(fh)
        w.writerow([*axes, "value"])
        for node, val in zip(g.nodes, v[0]):
            w.writerow([*(repr(float(c)) for c in node), repr(float(val))])


def _outdir(cfg: ex.RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_run(cfg: ex.RunConfig) -> int:
    p = cfg.problem.build()
    g = p.grid(cfg.dx, cfg.dt)
    out = _outdir(cfg)
    res = ex.solve(p, g, cfg.algo, cfg.solver_config())
    summary = ex.run_summary(cfg, res)
    summary["snapshot_levels"] = write_snapshots(out / "density_snapshots.csv", cfg, g, res.m)
    write_value(out / "value_t0.csv", cfg, g, res.v)
    _dump(out / "summary.json", _clean(summary))
    it = summary["iterations"]
    print(f"{cfg.algo} on {cfg.problem.name}: iterations={it} converged={res.diagnostics.converged} "
          f"time={res.diagnostics.wall_time:.2f}s")
    if "oracle" in summary and "E1" in summary["oracle"]:
        print(f"  E1={summary['oracle']['E1']:.3e}  Einf={summary['oracle']['Einf']:.3e} (vs analytic)")
    print(f"  terminal modes: {summary['terminal_modes']}")
    print(f"  artifacts in {out}")
    return EXIT_OK if res.diagnostics.converged else EXIT_NOT_CONVERGED


def cmd_convergence_table(cfg: ex.RunConfig) -> int:
    try:
        table = ex.convergence_table(cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    except ex.OracleGateError as exc:
        print(f"oracle gate failed: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    out = _outdir(cfg)
    rows = table["rows"]
    with (out / "convergence_table.csv").open("w", newline="") as fh:
        _csv_header(fh, cfg)
        w = csv.writer(fh)
        w.writerow(["dx", "dt", "n_steps", "E1", "Einf", "iterations", "order_E1", "order_Einf", "wall_time"])
        for i, r in enumerate(rows):
            o1 = table["order_E1"][i - 1] if i else ""
            oi = table["order_Einf"][i - 1] if i else ""
            w.writerow([r["dx"], r["dt"], r["n_steps"], r["E1"], r["Einf"], r["iterations"], o1, oi,
                        f"{r['wall_time']:.4f}"])
    _dump(out / "convergence_table.json", _clean({"config": cfg.to_dict(), **table}))
    print(f"oracle residual {table['oracle_residual']:.2e}")
    print(f"{'dx':>10} {'E1':>10} {'Einf':>10} {'n':>4} {'ord E1':>7} {'ord Einf':>8} {'time':>7}")
    for i, r in enumerate(rows):
        o1 = f"{table['order_E1'][i - 1]:.2f}" if i else ""
        oi = f"{table['order_Einf'][i - 1]:.2f}" if i else ""
        print(f"{r['dx']:>10.5g} {r['E1']:>10.3e} {r['Einf']:>10.3e} {r['iterations']:>4} {o1:>7} {oi:>8} "
              f"{r['wall_time']:>6.2f}s")
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED


def cmd_compare(cfg: ex.RunConfig) -> int:
    if cfg.problem.name == "lq":
        raise InputError("compare runs the aversion problems; pick --problem aversion1d or aversion2d")
    summary, ref, acc = ex.compare(cfg)
    out = _outdir(cfg)
    summary["terminal_modes"] = {"dlvi": ex.terminal_modes(ref.grid, ref.m),
                                 "adlvi": ex.terminal_modes(acc.grid, acc.m)}
    _dump(out / "compare.json", _clean({"config": cfg.to_dict(), **summary}))
    write_snapshots(out / "density_snapshots_dlvi.csv", cfg, ref.grid, ref.m)
    write_snapshots(out / "density_snapshots_adlvi.csv", cfg, acc.grid, acc.m)
    d, a = summary["dlvi"], summary["adlvi"]
    print(f"E1(m^L, m^ACC)={summary['E1']:.3e}  Einf(v^L, v^ACC)={summary['Einf']:.3e}")
    print(f"DLVI  n={d['iterations']}  time={d['wall_time']:.2f}s")
    print(f"ADLVI (n_c,n_f)=({a['iterations'][0]},{a['iterations'][1]})  time={a['wall_time']:.2f}s")
    return EXIT_OK if d["converged"] and a["converged"] else EXIT_NOT_CONVERGED


def _verify_one(args):
    prop, trials, seed, fault = args
    return run_property(prop, trials, seed, step=FAULTS[fault])


def cmd_verify(cfg: ex.RunConfig, names=None, fault: str = "none") -> int:
    chosen = [p for p in PROPERTIES if not names or p.name in names]
    if cfg.trials == 0:
        warnings.warn("zero trials requested: every property passes vacuously", RuntimeWarning, stacklevel=2)
    jobs = [(p, cfg.trials, cfg.seed, fault) for p in chosen]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            reports = list(pool.map(_verify_one, jobs))
    else:
        reports = [_verify_one(j) for j in jobs]
    for r in reports:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status} {r.name:<18} {r.passed}/{r.trials}  worst={r.worst:.2e}  tol={r.tol:.0e}")
    _dump(_outdir(cfg) / "verify.json", _clean({"config": cfg.to_dict(), "fault": fault,
                                                 "properties": [r.to_dict() for r in reports]}))
    return EXIT_OK if all(r.ok for r in reports) else EXIT_PROPERTY


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "convergence-table":
            return cmd_convergence_table(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_verify(cfg, names=args.property, fault=args.inject_fault)
    except InputError as exc:
        print(f"slmfg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
