"""Print four-arm study percentages and planning gaps for a scenario.

Used to pick the default archetypes: the study arms should come out ordered
Control < SMS < Hybrid < Call near 23/28/30/38 %, and the Whittle policy should
show a clear call-minus-control gap over the random policy.

    python scripts/calibrate_scenario.py [--config scenario.json] [--seeds 5] [--runs 10]
"""

import argparse
import json
import time

import numpy as np

from engageplan import sim


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--set", default="{}", help="JSON merged into the scenario, e.g. '{\"interventions\": {...}}'")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--runs", type=int, default=10)
    args = ap.parse_args()

    data = json.load(open(args.config)) if args.config else {}
    for section, values in json.loads(args.set).items():
        data.setdefault(section, {}).update(values)
    scenario = sim.scenario_from_dict(data)

    t = time.time()
    rows = []
    for seed in range(args.seeds):
        res = sim.psqis_experiment(scenario, seed)
        rows.append([res.percent[a.value] for a in sim.ARM_ORDER])
        ordered = all(np.diff(rows[-1]) > 0)
        print(f"seed {seed}: " + " ".join(f"{x:5.1f}" for x in rows[-1]) + f"  n/arm {res.n['control']}"
              + ("" if ordered else "  <-- order broken"))
    rows = np.array(rows)
    print("mean    " + " ".join(f"{x:5.1f}" for x in rows.mean(axis=0)) + "   (control sms hybrid call)")
    print(f"study: {time.time() - t:.1f}s")

    t = time.time()
    model = sim.train_planning_model(scenario, 0)
    ev = sim.evaluate_policy(scenario, model, runs=args.runs, seed=0)
    print(ev.table(), end="")
    wins = int(np.sum((ev.gap("whittle") > ev.gap("random")) & (ev.gap("whittle") >= 5)))
    print(f"whittle gap >= 5 and above random in {wins}/{args.runs} runs; planning: {time.time() - t:.1f}s")


if __name__ == "__main__":
    main()
