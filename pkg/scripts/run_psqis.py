"""Four-arm intervention study (control / SMS / hybrid / call) on the simulator.

Prints the share of high post-period engagers per arm for each seed and the
mean over seeds, plus a pooled two-proportion test of each arm against control.

    python scripts/run_psqis.py [--config scenario.json] [--seeds 20] [--n 40000] [--json out.json]
"""

import argparse
import json
from dataclasses import replace

import numpy as np
from scipy import stats

from engageplan import sim


def pooled_p(h1, n1, h2, n2):
    p = (h1 + h2) / (n1 + n2)
    se = np.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    return 1.0 if se == 0 else float(2 * stats.norm.sf(abs((h1 / n1 - h2 / n2) / se)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", help="scenario JSON")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n", type=int, help="cohort size before the pool filter")
    ap.add_argument("--zero-effect", action="store_true", help="interventions that do nothing")
    ap.add_argument("--json", help="write per-seed results here")
    args = ap.parse_args()

    scenario = sim.load_scenario(args.config) if args.config else sim.default_scenario()
    if args.n:
        scenario = replace(scenario, psqis=replace(scenario.psqis, n_beneficiaries=args.n))
    if args.zero_effect:
        scenario = replace(scenario, cohort=sim.zero_effect(scenario.cohort))

    arms = [a.value for a in sim.ARM_ORDER]
    rows, hits, sizes = [], dict.fromkeys(arms, 0), dict.fromkeys(arms, 0)
    print("seed  " + "".join(f"{a:>9}" for a in arms))
    for seed in range(args.seeds):
        res = sim.psqis_experiment(scenario, seed)
        rows.append({a: res.percent[a] for a in arms})
        for a in arms:
            hits[a] += sum(res.high[b] for b in res.assignment.members(sim.Arm(a)))
            sizes[a] += res.n[a]
        print(f"{seed:>4}  " + "".join(f"{res.percent[a]:>9.1f}" for a in arms))
    mean = {a: float(np.mean([r[a] for r in rows])) for a in arms}
    print("mean  " + "".join(f"{mean[a]:>9.1f}" for a in arms))
    ordered = sum(all(r[x] < r[y] for x, y in zip(arms, arms[1:])) for r in rows)
    print(f"strict ordering in {ordered}/{args.seeds} seeds")
    for a in arms[1:]:
        print(f"{a} vs control: pooled p = {pooled_p(hits[a], sizes[a], hits['control'], sizes['control']):.3g}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"per_seed": rows, "mean": mean, "pooled_n": sizes, "pooled_high": hits}, f, indent=2)


if __name__ == "__main__":
    main()
