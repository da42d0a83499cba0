"""``engageplan`` command line.

Every subcommand is a pure function of its input files, the effective
configuration and the root seed.  The effective configuration (defaults,
then the ``--config`` JSON file, then command-line flags) is echoed into each
JSON output; CSV outputs carry ``# key=value`` provenance lines with its hash.

Exit codes: 0 success, 1 I/O or data error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, replace
from datetime import date, timedelta
from pathlib import Path

from . import __version__
from . import calllog as cl
from . import sim
from .config import ConfigError, build_dataclass
from .datafiles import (
    DataFileError,
    provenance,
    provenance_lines,
    read_beneficiaries,
    read_calls,
    read_interventions,
    write_beneficiaries,
    write_calls,
    write_csv,
    write_interventions,
    write_json,
)
from .dataset import Dataset, build_dataset, from_examples, split_indices
from .predictors import (
    CondipConfig,
    CondipModel,
    ForestConfig,
    RandomForest,
    RuleModel,
    RulePredictorConfig,
    TrainConfig,
    evaluate,
    load_model,
    save_model,
)
from .predictors.condip import TrainingDiverged
from .predictors.metrics import MetricsError, write_roc_csv
from .rmab import (
    MONTH_DAYS,
    ClusterModel,
    RmabError,
    TransitionCounts,
    WhittleTable,
    build_tuples,
    fit_cluster_model,
    monthly_actions,
    monthly_states,
    plan_top_k,
    rank_by_index,
)
from .seeding import child_seed

log = logging.getLogger("engageplan")

TASKS = ("short", "long")
MODELS = ("rule", "forest", "condip")


class DataError(RuntimeError):
    """Input data present but unusable (exit code 1)."""


@dataclass
class RunConfig:
    task: str = "long"
    test_fraction: float = 0.2
    engagement_seconds: float = cl.ENGAGEMENT_SECONDS
    e2c_threshold: float = cl.E2C_THRESHOLD
    model: str = "rule"
    as_of: str = ""  # ISO date; empty = day after the last logged call
    policies: tuple[str, ...] = sim.POLICIES

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError("task", f"expected one of {TASKS}")
        if self.model not in MODELS:
            raise ConfigError("model", f"expected one of {MODELS}")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction", "must lie in [0, 1)")
        if not 0 < self.e2c_threshold < 1:
            raise ConfigError("e2c_threshold", "must lie in (0, 1)")
        if self.engagement_seconds < 0:
            raise ConfigError("engagement_seconds", "must be >= 0")
        bad = [p for p in self.policies if p not in sim.POLICIES]
        if bad or not self.policies:
            raise ConfigError("policies", f"expected a non-empty subset of {sim.POLICIES}")
        if self.as_of:
            try:
                date.fromisoformat(self.as_of)
            except ValueError:
                raise ConfigError("as_of", f"expected an ISO date, got {self.as_of!r}") from None


MODEL_SECTIONS = {"run": RunConfig, "rule": RulePredictorConfig, "forest": ForestConfig,
                  "condip": CondipConfig, "training": TrainConfig}
SCENARIO_SECTIONS = ("cohort", "interventions", "pool", "psqis", "planning")


@dataclass
class Settings:
    seed: int
    scenario: sim.Scenario
    run: RunConfig
    rule: RulePredictorConfig
    forest: ForestConfig
    condip: CondipConfig
    training: TrainConfig

    def as_dict(self) -> dict:
        out = {"seed": self.seed, **sim.scenario_to_dict(self.scenario)}
        for name in MODEL_SECTIONS:
            out[name] = asdict(getattr(self, name))
        return json.loads(json.dumps(out))


def _int_or_str(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ConfigError(path, f"expected an integer or a string, got {v!r}")
    return v


SPECIAL_FIELDS = {"forest": {"features_per_split": _int_or_str}}


def _section(cls, data, name):
    try:
        return build_dataclass(cls, data, name, SPECIAL_FIELDS.get(name))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def load_settings(data: dict, overrides: dict, seed: int | None) -> Settings:
    """Defaults <- ``data`` (parsed config file) <- ``overrides`` ({section: {field: value}})."""
    if not isinstance(data, dict):
        raise ConfigError("config", "expected a JSON object")
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for section, values in overrides.items():
        base = merged.setdefault(section, {})
        if not isinstance(base, dict):
            raise ConfigError(section, "expected an object")
        base.update(values)
    unknown = sorted(set(merged) - set(SCENARIO_SECTIONS) - set(MODEL_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    root = merged.get("seed", 0) if seed is None else seed
    if isinstance(root, bool) or not isinstance(root, int) or root < 0:
        raise ConfigError("seed", f"expected a non-negative integer, got {root!r}")
    scenario = sim.scenario_from_dict({k: merged[k] for k in SCENARIO_SECTIONS if k in merged})
    parts = {name: _section(cls, merged.get(name, {}), name) for name, cls in MODEL_SECTIONS.items()}
    # one E2C threshold for labels, states and the rule
    rule_cfg = merged.get("rule", {})
    if "e2c_threshold" in rule_cfg and rule_cfg["e2c_threshold"] != parts["run"].e2c_threshold:
        raise ConfigError("rule.e2c_threshold", "differs from run.e2c_threshold; set run.e2c_threshold only")
    parts["rule"] = replace(parts["rule"], e2c_threshold=parts["run"].e2c_threshold)
    return Settings(root, scenario, **parts)


# ---------------------------------------------------------------------------
# helpers


def _prov(settings: Settings, command: str) -> dict:
    return {**provenance(settings.as_dict(), settings.seed), "command": command}


def _json_prov(settings: Settings, command: str) -> dict:
    return {**_prov(settings, command), "config": settings.as_dict()}


def _read_data(data_dir: Path, strict: bool, need_calls: bool = True):
    if not data_dir.is_dir():
        raise DataError(f"{data_dir}: no such data directory")
    profiles = {p.beneficiary_id: p for p in read_beneficiaries(data_dir / "beneficiaries.csv", strict)}
    calls = read_calls(data_dir / "calls.csv", strict) if need_calls else []
    iv_path = data_dir / "interventions.csv"
    interventions = read_interventions(iv_path, strict) if iv_path.exists() else []
    return profiles, calls, interventions


def _load_dataset(path: Path, settings: Settings, strict: bool) -> Dataset:
    """A dataset file, a directory holding dataset.json, or a directory of CSVs."""
    if path.is_file():
        return Dataset.load(path)
    if (path / "dataset.json").is_file():
        return Dataset.load(path / "dataset.json")
    return _featurize(path, settings, strict)


def _featurize(data_dir: Path, settings: Settings, strict: bool) -> Dataset:
    profiles, calls, _ = _read_data(data_dir, strict)
    run = settings.run
    histories = cl.build_histories(calls, engagement_seconds=run.engagement_seconds)
    ds = build_dataset(histories, profiles, run.task, child_seed(settings.seed, "featurize"),
                       threshold=run.e2c_threshold)
    if len(ds) == 0:
        raise DataError(f"{data_dir}: no usable {run.task}-term examples")
    return ds


def _rule_model(settings: Settings, task: str) -> RuleModel:
    window = cl.LONG_FEATURE_DAYS if task == "long" else settings.rule.window_days
    return RuleModel(replace(settings.rule, window_days=window))


def train_model(kind: str, data: Dataset, settings: Settings, task: str):
    """Fit a predictor; every random draw derives from the root seed."""
    if kind == "rule":
        return _rule_model(settings, task).fit(data)
    if kind == "forest":
        return RandomForest(replace(settings.forest, seed=child_seed(settings.seed, "forest"))).fit(data)
    model = CondipModel.initialize(settings.condip, data.dynamic.shape[2], data.nn_static().shape[1],
                                   child_seed(settings.seed, "condip", "init"))
    model.train_cfg = replace(settings.training, seed=child_seed(settings.seed, "condip", "train"))
    return model.fit(data)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args, settings: Settings, out: Path) -> None:
    """Synthetic cohort with exploratory calls, written in the call-log schemas."""
    sc = settings.scenario
    spec = replace(sc.cohort, seed=child_seed(settings.seed, "generate", "cohort"))
    cohort = sim.generate_cohort(spec)
    sched = sim.exploration_schedule(cohort, sc.interventions.explore_call_prob,
                                     child_seed(settings.seed, "generate", "explore"))
    outcome = sim.simulate_program(cohort, sched, child_seed(settings.seed, "generate", "program"), sc.interventions)
    _write_outcome(out, outcome, settings, "generate")
    log.info("generated %d beneficiaries over %d weeks", len(cohort), spec.weeks)


def _write_outcome(out: Path, outcome: sim.SimOutcome, settings: Settings, command: str, extra: dict | None = None):
    prov = _prov(settings, command)
    write_beneficiaries(out / "beneficiaries.csv", outcome.cohort.profiles, prov)
    write_calls(out / "calls.csv", outcome.records(), prov)
    write_interventions(out / "interventions.csv", outcome.interventions(), prov)
    truth = {**outcome.cohort.ground_truth(), "scenario": sim.scenario_to_dict(settings.scenario), **(extra or {})}
    write_json(out / "ground_truth.json", truth, _json_prov(settings, command))


def cmd_simulate(args, settings: Settings, out: Path) -> None:
    """Four-arm study on a fresh cohort."""
    res = sim.psqis_experiment(settings.scenario, settings.seed)
    _write_outcome(out, res.outcome, settings, "simulate", {"arms": {b: a.value if a else None
                                                                      for b, a in sorted(res.assignment.arms.items())}})
    write_json(out / "psqis.json", res.summary(), _json_prov(settings, "simulate"))
    rows = [(b, a.value) for b, a in sorted(res.assignment.arms.items()) if a is not None]
    write_csv(out / "arms.csv", ("beneficiary_id", "arm"), rows, _prov(settings, "simulate"))
    for a in sim.ARM_ORDER:
        print(f"{a.value:<8} {res.percent[a.value]:5.1f}%  (n={res.n[a.value]})")


def cmd_featurize(args, settings: Settings, out: Path) -> None:
    ds = _featurize(Path(args.data), settings, args.strict)
    ds.save(out / "dataset.json", _json_prov(settings, "featurize"))
    print(f"{len(ds)} {ds.task}-term examples, positive rate {ds.y.mean():.3f}")


def cmd_train(args, settings: Settings, out: Path) -> None:
    run = settings.run
    ds = _load_dataset(Path(args.data), settings, args.strict)
    if ds.task != run.task:
        raise DataError(f"dataset holds {ds.task}-term examples but task is {run.task!r}")
    tr, te = split_indices(len(ds), run.test_fraction, settings.seed)
    if len(tr) == 0 or (run.test_fraction > 0 and len(te) == 0):
        raise DataError(f"{len(ds)} examples are too few for a {run.test_fraction} test split")
    test = ds.subset(te) if len(te) else ds.subset(tr)
    model = train_model(run.model, ds.subset(tr), settings, run.task)
    report = evaluate(model.predict_proba(test), test.y)
    prov = _json_prov(settings, "train")
    save_model(out / "model.json", model, settings.seed, prov, task=run.task)
    metrics = {"model": run.model, "task": run.task, "n_train": int(len(tr)), "n_test": int(len(test)),
               "held_out": bool(len(te)), **report.summary()}
    write_json(out / "metrics.json", metrics, prov)
    write_roc_csv(out / "roc.csv", report, provenance_lines(_prov(settings, "train")))
    print(f"{run.model}: accuracy {report.accuracy:.4f}  f1 {report.f1:.4f}  auc {report.auc:.4f}  (n_test={len(test)})")


def cmd_predict(args, settings: Settings, out: Path) -> None:
    model = load_model(args.model_path)
    ds = _load_dataset(Path(args.data), settings, args.strict)
    if model.task is not None and model.task != ds.task:
        raise DataError(f"model was trained for the {model.task}-term task, dataset is {ds.task}-term")
    p = model.predict_proba(ds)
    rows = [(b, float(x), int(x >= 0.5)) for b, x in zip(ds.ids, p)]
    write_csv(out / "predictions.csv", ("beneficiary_id", "probability", "label"), rows, _prov(settings, "predict"))
    print(f"{len(rows)} predictions, {sum(r[2] for r in rows)} positive")


def _as_of(settings: Settings, calls) -> date:
    if settings.run.as_of:
        return date.fromisoformat(settings.run.as_of)
    if not calls:
        raise DataError("no calls logged; pass --as-of")
    return max(r.call_date for r in calls) + timedelta(days=1)


def _complete_months(h: cl.CallHistory, start: date, as_of: date) -> int:
    stop = as_of if h.end is None else min(as_of, h.end)
    return max((stop - start).days // MONTH_DAYS, 0)


def plan_pool(profiles, histories, model, settings: Settings, as_of: date) -> list[str]:
    """Predicted low long-term engagers with enough early engagements, registered
    at least one feature window before ``as_of``."""
    pool_cfg = settings.scenario.pool
    ids = [b for b in sorted(profiles)
           if profiles[b].registration_date + timedelta(days=cl.LONG_FEATURE_DAYS) <= as_of]
    if not ids:
        return []
    feats = []
    for b in ids:
        h = histories.get(b, cl.CallHistory(b))
        reg = profiles[b].registration_date
        feats.append((cl.featurize(h, profiles[b], reg + timedelta(days=cl.LONG_FEATURE_DAYS), cl.LONG_FEATURE_DAYS),
                      cl.EngagementLabel.LLTE))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", cl.TruncatedSequenceWarning)
        llte = model.predict_proba(from_examples(feats, "long")) >= 0.5
    out = []
    for b, flag in zip(ids, llte):
        if not flag:
            continue
        reg = profiles[b].registration_date
        h = histories.get(b, cl.CallHistory(b))
        _, _, eng = h.counts(reg, reg + timedelta(days=pool_cfg.engagement_days))
        if eng >= pool_cfg.min_engagements:
            out.append(b)
    return out


def fit_plan_clusters(profiles, histories, interventions, settings: Settings, as_of: date) -> ClusterModel:
    pc = settings.scenario.planning
    calls_by_id: dict[str, list[date]] = {}
    for iv in interventions:
        if iv.kind == "CALL" and iv.success:
            calls_by_id.setdefault(iv.beneficiary_id, []).append(iv.date)
    counts = {}
    for b, p in profiles.items():
        h = histories.get(b, cl.CallHistory(b))
        n = _complete_months(h, p.registration_date, as_of)
        s = monthly_states(h, p.registration_date, n, settings.run.e2c_threshold)
        a = monthly_actions(calls_by_id.get(b, []), p.registration_date, n)
        counts[b] = TransitionCounts.from_tuples(build_tuples(s, a))
    model = fit_cluster_model(profiles, counts, pc.n_clusters, pc.alpha, pc.beta,
                              child_seed(settings.seed, "plan", "kmeans"))
    model.compute_indices()
    return model


def cmd_plan(args, settings: Settings, out: Path) -> None:
    run, pc = settings.run, settings.scenario.planning
    profiles, calls, interventions = _read_data(Path(args.data), args.strict)
    histories = cl.build_histories(calls, engagement_seconds=run.engagement_seconds)
    as_of = _as_of(settings, calls)
    if args.model_path:
        model = load_model(args.model_path)
        if model.task not in (None, "long"):
            raise DataError(f"plan needs a long-term (LLTE) model, {args.model_path} is {model.task}-term")
    else:
        model = _rule_model(settings, "long")
    pool = plan_pool(profiles, histories, model, settings, as_of)
    states = {}
    for b in pool:
        h = histories.get(b, cl.CallHistory(b))
        n = _complete_months(h, profiles[b].registration_date, as_of)
        if n == 0:
            log.warning("%s: no complete month before %s, left out", b, as_of)
            continue
        states[b] = int(monthly_states(h, profiles[b].registration_date, n, run.e2c_threshold)[-1])
    if not states:
        raise DataError("empty intervention pool")
    if args.clusters:
        clusters = ClusterModel.from_dict(json.loads(Path(args.clusters).read_text()))
        if not clusters.indices:
            clusters.compute_indices()
    else:
        clusters = fit_plan_clusters(profiles, histories, interventions, settings, as_of)
    table = WhittleTable.build(clusters, profiles, states)
    k = pc.k
    if k > len(states):
        log.warning("budget k=%d exceeds the pool of %d; selecting everyone", k, len(states))
    chosen = set(plan_top_k(table, min(k, len(states))).selected)
    rows = [(b, table.cluster[b], "E" if table.state[b] == 1 else "NE", round(table.index[b], 9), int(b in chosen))
            for b in rank_by_index(table.index)]
    write_csv(out / "plan.csv", ("beneficiary_id", "cluster_id", "state", "whittle_index", "selected"), rows,
              _prov(settings, "plan"))
    write_json(out / "clusters.json", {**clusters.to_dict(), "as_of": as_of.isoformat(), "pool_size": len(states)},
               _json_prov(settings, "plan"))
    print(f"pool {len(states)}, selected {len(chosen)} as of {as_of}")


def cmd_evaluate(args, settings: Settings, out: Path) -> None:
    gt_path = Path(args.ground_truth)
    if not gt_path.is_file():
        raise DataError(f"{gt_path}: ground truth not found")
    try:
        truth = json.loads(gt_path.read_text())
        data_scenario = sim.scenario_from_dict(truth["scenario"])
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{gt_path}: not a ground-truth file ({exc})") from None
    except ConfigError as exc:
        raise DataError(f"{gt_path}: bad scenario ({exc})") from None
    # behaviour comes from the data-generating scenario, study design from the current config
    sc = replace(data_scenario, planning=settings.scenario.planning)
    pc = sc.planning
    model = sim.train_planning_model(sc, child_seed(settings.seed, "evaluate", "train"))
    ev = sim.evaluate_policy(sc, model, settings.run.policies, pc.k, pc.runs, child_seed(settings.seed, "evaluate"))
    prov = _json_prov(settings, "evaluate")
    write_json(out / "evaluation.json", {"k": ev.k, "runs": ev.runs, "policies": ev.summary(),
                                         "per_run": {p: {"call": ev.call[p].tolist(), "control": ev.control[p].tolist()}
                                                     for p in ev.call}}, prov)
    text = ev.table()
    (out / "evaluation.txt").write_text(provenance_lines(_prov(settings, "evaluate")) + text)
    print(text, end="")


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "plan": cmd_plan,
    "evaluate": cmd_evaluate,
}


# ---------------------------------------------------------------------------
# argument parsing


def _common(default):
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="root seed (default: config 'seed' or 0)")
    p.add_argument("--out", help="output directory (created if missing; default '.')")
    p.add_argument("--strict", action="store_true", help="reject malformed CSV rows instead of skipping them")
    p.add_argument("-v", "--verbose", action="count", help="more logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="engageplan", parents=[_common(argparse.SUPPRESS)],
                                 description="Engagement prediction and intervention planning for call programmes.")
    ap.add_argument("--version", action="version", version=f"engageplan {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = _common(argparse.SUPPRESS)

    p = sub.add_parser("generate", parents=[common], help="synthetic cohort and call logs")
    p.add_argument("--n", type=int, help="beneficiaries (cohort.n_beneficiaries)")
    p.add_argument("--weeks", type=int, help="weeks simulated (cohort.weeks)")

    p = sub.add_parser("simulate", parents=[common], help="four-arm intervention study")
    p.add_argument("--n", type=int, help="beneficiaries before pool filtering (psqis.n_beneficiaries)")

    p = sub.add_parser("featurize", parents=[common], help="features and labels from CSV data")
    p.add_argument("--data", required=True, help="directory with beneficiaries.csv and calls.csv")
    p.add_argument("--task", choices=TASKS)

    p = sub.add_parser("train", parents=[common], help="train and score a predictor")
    p.add_argument("--data", required=True, help="dataset.json, or a directory holding it or the CSVs")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--test-fraction", type=float)

    p = sub.add_parser("predict", parents=[common], help="score a dataset with a saved model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", dest="model_path", required=True, help="model.json from train")
    p.add_argument("--task", choices=TASKS)

    p = sub.add_parser("plan", parents=[common], help="Whittle-index top-k call plan")
    p.add_argument("--data", required=True, help="directory with beneficiaries.csv, calls.csv, interventions.csv")
    p.add_argument("--model", dest="model_path", help="long-term model.json (default: the E2C rule)")
    p.add_argument("--clusters", help="clusters.json from an earlier plan run (default: fit from the data)")
    p.add_argument("--k", type=int, help="call budget (planning.k)")
    p.add_argument("--n-clusters", type=int, help="k-means clusters (planning.n_clusters)")
    p.add_argument("--as-of", help="planning date, ISO format (default: day after the last call)")

    p = sub.add_parser("evaluate", parents=[common], help="policy comparison on the simulator")
    p.add_argument("--ground-truth", required=True, help="ground_truth.json from generate or simulate")
    p.add_argument("--runs", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--policies", help="comma separated subset of " + ",".join(sim.POLICIES))
    p.add_argument("--replan-months", type=int,
                   help="re-rank the call arm every this many months (0 = plan once)")
    return ap


def _overrides(args) -> dict:
    o: dict[str, dict] = {}

    def put(section, name, value):
        if value is not None:
            o.setdefault(section, {})[name] = value

    cmd = args.command
    if cmd == "generate":
        put("cohort", "n_beneficiaries", getattr(args, "n", None))
        put("cohort", "weeks", getattr(args, "weeks", None))
    if cmd == "simulate":
        put("psqis", "n_beneficiaries", getattr(args, "n", None))
    put("run", "task", getattr(args, "task", None))
    put("run", "model", getattr(args, "model", None))
    put("run", "test_fraction", getattr(args, "test_fraction", None))
    put("run", "as_of", getattr(args, "as_of", None))
    pol = getattr(args, "policies", None)
    put("run", "policies", [s.strip() for s in pol.split(",")] if pol else None)
    put("planning", "k", getattr(args, "k", None))
    put("planning", "runs", getattr(args, "runs", None))
    put("planning", "n_clusters", getattr(args, "n_clusters", None))
    put("planning", "replan_months", getattr(args, "replan_months", None))
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.strict = getattr(args, "strict", False)
    verbose = getattr(args, "verbose", 0) or 0
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    out = Path(getattr(args, "out", None) or ".")
    try:
        data = {}
        cfg_path = getattr(args, "config", None)
        if cfg_path:
            try:
                data = json.loads(Path(cfg_path).read_text())
            except OSError as exc:
                print(f"error: cannot read config {cfg_path}: {exc.strerror}", file=sys.stderr)
                return 1
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{cfg_path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
        settings = load_settings(data, _overrides(args), getattr(args, "seed", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, settings, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, DataFileError, DataError, cl.CallLogError, RmabError, sim.SimError, MetricsError,
            TrainingDiverged, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
