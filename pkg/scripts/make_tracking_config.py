"""Write configs/tracking.json and its target CSV.

The targets are the state of the admissible control
u* = 1 + 0.5 cos(pi x) sin(pi t), so the optimal cost is zero.
"""
import json
from dataclasses import replace
from pathlib import Path

from npc.config import build_problem, dumps, eval_expr, to_dict
from npc.harness import reference_config
from npc.io import write_fields_csv
from npc.state import solve_state

U_STAR = "1 + 0.5*cos(pi*x)*sin(pi*t)"


def main(out_dir="configs"):
    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    cfg = reference_config()
    prob = build_problem(cfg)
    u_star = eval_expr(U_STAR, prob.st)
    tr = solve_state(prob.st, prob.pot, prob.B, u_star, prob.init, cfg.solver)
    write_fields_csv(out / "tracking_targets.csv", prob.st, rho=tr.rho, mu=tr.mu, u_star=u_star)
    data = to_dict(cfg)
    data["targets"] = {"rho_Q": "file:tracking_targets.csv:rho", "mu_Q": "file:tracking_targets.csv:mu"}
    data["constraints"] = {"u_max": "3", "R": 5.0}
    data["control"] = "0"
    data["output_dir"] = "out/tracking"
    (out / "tracking.json").write_text(json.dumps(data, indent=2) + "\n")
    print(f"wrote {out / 'tracking.json'} and {out / 'tracking_targets.csv'}")


if __name__ == "__main__":
    main()
