"""Planning policies compared on the simulator: top-k overlap with high
post-period engagement in a called arm and an uncalled control arm.

    python scripts/run_planning.py [--config scenario.json] [--runs 50] [--k 100]
                                   [--replan-months 0] [--seed 0] [--json out.json]
"""

import argparse
import json
from dataclasses import replace

import numpy as np

from engageplan import sim


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", help="scenario JSON")
    ap.add_argument("--runs", type=int)
    ap.add_argument("--k", type=int)
    ap.add_argument("--replan-months", type=int, help="re-rank the call arm every this many months")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--policies", default=",".join(sim.POLICIES))
    ap.add_argument("--json", help="write the summary here")
    args = ap.parse_args()

    scenario = sim.load_scenario(args.config) if args.config else sim.default_scenario()
    if args.replan_months is not None:
        scenario = replace(scenario, planning=replace(scenario.planning, replan_months=args.replan_months))
    model = sim.train_planning_model(scenario, args.seed)
    print("cluster indices (W_NE, W_E):")
    for c, (w_ne, w_e) in sorted(model.indices.items()):
        print(f"  {c:>3}: {w_ne:7.3f} {w_e:7.3f}")
    policies = tuple(p.strip() for p in args.policies.split(","))
    ev = sim.evaluate_policy(scenario, model, policies, args.k, args.runs, args.seed)
    print(ev.table(), end="")
    if "whittle" in policies and "random" in policies:
        g_w, g_r = ev.gap("whittle"), ev.gap("random")
        print(f"whittle gap >= 5 and above random in {int(np.sum((g_w >= 5) & (g_w > g_r)))}/{ev.runs} runs")
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"k": ev.k, "runs": ev.runs, "summary": ev.summary()}, f, indent=2)


if __name__ == "__main__":
    main()
