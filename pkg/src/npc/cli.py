"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build_problem, load
from .errors import LinearSolveFailure, NonConvergence
from .harness import SUITES, gradient_check, reference_config, run_suite, smooth_field, write_reports
from .io import write_fields_csv, write_rows_csv
from .optimizer import project_Uad, projected_gradient
from .sensitivity import taylor_test
from .state import solve_state

log = logging.getLogger("npc")

TAYLOR_LAMBDAS = (1e-1, 5e-2, 2.5e-2, 1.25e-2)


def _setup_logging():
    level = os.environ.get("NPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args) -> tuple[RunConfig, Path | None]:
    if args.config is None:
        cfg, base = reference_config(), None
    else:
        cfg, base = load(args.config), Path(args.config).resolve().parent
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg, base


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    cfg, base = _load(args)
    prob = build_problem(cfg, base)
    tr = solve_state(prob.st, prob.pot, prob.B, prob.u0, prob.init, cfg.solver)
    out = _out_dir(args, cfg)
    write_fields_csv(out / "state.csv", prob.st, rho=tr.rho, mu=tr.mu, u=prob.u0)
    print(f"rho in [{tr.rho.min():.6f}, {tr.rho.max():.6f}], min mu {tr.mu.min():.6f}; "
          f"wrote {out / 'state.csv'}")
    return 0 if tr.bounds_ok else 1


def cmd_optimize(args) -> int:
    cfg, base = _load(args)
    prob = build_problem(cfg, base)
    cp = prob.control
    u0 = prob.u0
    if not cp.cons.feasible(u0):
        log.warning("initial control is not admissible; projecting it")
        u0 = project_Uad(u0, cp.cons, cfg.optimizer.projection)
    run = projected_gradient(cp, u0, cfg.optimizer)
    out = _out_dir(args, cfg)
    run.to_csv(out / "cost_history.csv")
    write_fields_csv(out / "control.csv", prob.st, u=run.u)
    J = run.cost_history
    print(f"{run.exit_reason} after {run.iterations} iterations: J {J[0]:.6e} -> {J[-1]:.6e}, "
          f"stationarity {run.stationarity_history[-1]:.3e}")
    return 0


def cmd_verify(args) -> int:
    cfg, _ = _load(args)
    reports = run_suite(args.suite, cfg, threads=args.threads)
    for r in reports:
        print(r.line())
    out = _out_dir(args, cfg)
    write_reports(reports, out)
    n_pass = sum(r.passed for r in reports)
    print(f"{n_pass}/{len(reports)} checks passed (seed {cfg.seed})")
    return 0 if n_pass == len(reports) else 1


def cmd_taylor(args) -> int:
    cfg, base = _load(args)
    prob = build_problem(cfg, base)
    rng = np.random.default_rng(cfg.seed)
    h = smooth_field(prob.st, rng)
    tab = taylor_test(prob.st, prob.pot, prob.B, prob.u0, h, TAYLOR_LAMBDAS, prob.init, cfg.solver)
    out = _out_dir(args, cfg)
    ratios = list(tab.ratios) + [float("nan")]
    write_rows_csv(out / "taylor.csv", ["lambda", "remainder", "ratio"],
                   [[float(l), float(r), float(q)] for l, r, q in zip(tab.lambdas, tab.remainders, ratios)])
    for l, r in zip(tab.lambdas, tab.remainders):
        print(f"lambda={l:.4e} r={r:.6e}")
    print("ratios " + " ".join(f"{q:.4f}" for q in tab.ratios)
          + f"; lagged vs unlagged linearization {tab.scheme_mismatch:.3e}")
    ok = tab.strictly_decreasing and bool(np.all((tab.ratios >= 1.5) & (tab.ratios <= 3.0)))
    return 0 if ok else 1


def cmd_gradcheck(args) -> int:
    cfg, base = _load(args)
    prob = build_problem(cfg, base)
    rng = np.random.default_rng(cfg.seed)
    dirs = [smooth_field(prob.st, rng) for _ in range(args.directions)]
    errs, agree = gradient_check(prob.control, prob.u0, dirs)
    out = _out_dir(args, cfg)
    write_rows_csv(out / "gradcheck.csv", ["direction", "rel_error", "fd_step_agreement"],
                   [[i, float(e), float(a)] for i, (e, a) in enumerate(zip(errs, agree))])
    print(f"max relative error {errs.max():.3e} over {len(errs)} directions")
    return 0 if errs.max() <= args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON); defaults to the 1D reference instance")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent checks")
    p = argparse.ArgumentParser(prog="npc", description="Nonlocal phase-field optimal control toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="forward solve; writes state.csv").set_defaults(fn=cmd_solve)
    sub.add_parser("optimize", parents=[common],
                   help="projected gradient; writes cost_history.csv and control.csv").set_defaults(fn=cmd_optimize)
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=SUITES + ("all",))
    v.set_defaults(fn=cmd_verify)
    sub.add_parser("taylor", parents=[common], help="Taylor remainder ladder at the configured control"
                   ).set_defaults(fn=cmd_taylor)
    g = sub.add_parser("gradcheck", parents=[common], help="adjoint gradient against finite differences")
    g.add_argument("--directions", type=int, default=10)
    g.add_argument("--tol", type=float, default=1e-3)
    g.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergence, LinearSolveFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
