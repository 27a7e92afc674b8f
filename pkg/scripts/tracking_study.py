"""Manufactured tracking problem: compare step rules and gradient metrics.

Runs the projected gradient method on configs/tracking.json for each
(gradient_metric, step_rule) pair and writes one cost-history CSV per run.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from npc.config import build_problem, load
from npc.optimizer import projected_gradient

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=200)
    ap.add_argument("--out", default="out/tracking_study")
    ap.add_argument("--runs", nargs="*", default=["h1:bb", "h1:fixed", "l2:bb", "l2:fixed"],
                    help="metric:step_rule pairs")
    args = ap.parse_args()
    cfg = load(ROOT / "configs" / "tracking.json")
    prob = build_problem(cfg, ROOT / "configs")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for spec in args.runs:
        metric, rule = spec.split(":")
        oc = replace(cfg.optimizer, max_iters=args.iters, stat_tol=0.0, gradient_metric=metric, step_rule=rule)
        run = projected_gradient(prob.control, prob.st.zeros(), oc)
        run.to_csv(out / f"{metric}_{rule}.csv")
        J = run.cost_history
        print(f"{metric:2s} {rule:5s}: J {J[0]:.3e} -> {J[-1]:.3e} (x{J[0] / J[-1]:.2e}) after "
              f"{run.iterations} iterations, exit {run.exit_reason}")


if __name__ == "__main__":
    main()
