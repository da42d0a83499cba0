"""Synthetic cohorts with planted behaviour MDPs, call-programme simulation,
four-arm intervention studies and end-to-end evaluation of planning policies.

Time runs in days from each beneficiary's registration.  Programme calls go
out twice a week (days ``7w + 2`` and ``7w + 5``), the latent engagement state
changes once per 30-day month, and an intervention acts on the month it falls
in.  All noise of a programme run is drawn up front with fixed shapes, so two
runs with the same seed share their randomness and differ only downstream of
the interventions that differ (common random numbers).
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import calllog as cl
from .calllog import E2C_THRESHOLD, BeneficiaryProfile, CallHistory, CallRecord
from .config import ConfigError, build_dataclass, check_type
from .datafiles import Intervention
from .rmab import (
    AGE_EDGES, DEFAULT_BETA, MONTH_DAYS, NE, ClusterModel, MdpParams, TransitionCounts,
    fit_cluster_model, overlap_metric, rank_by_index,
)
from .seeding import child_seed, substream

log = logging.getLogger(__name__)

CALL_WEEKDAYS = (2, 5)
NO_ACTION, CALL, SMS = 0, 1, 2
KIND_CODES = {"CALL": CALL, "SMS": SMS}
KIND_NAMES = {CALL: "CALL", SMS: "SMS"}
ACTION_A, ACTION_I, ACTION_SMS = 0, 1, 2


SpecError = ConfigError


class SimError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Cohort specification

PROFILE_DOMAINS: dict[str, tuple] = {
    "age": tuple(range(cl.AGE_RANGE[0], cl.AGE_RANGE[1] + 1)),
    "education_level": cl.EDUCATION_LEVELS,
    "income_group": cl.INCOME_GROUPS,
    "phone_owner": cl.PHONE_OWNERS,
    "language": cl.LANGUAGES,
    "call_slot": cl.CALL_SLOTS,
    "gestation_age": tuple(range(cl.GESTATION_RANGE[0], cl.GESTATION_RANGE[1] + 1)),
}


@dataclass
class Categorical:
    values: list
    weights: list[float]

    def validate(self, name: str, path: str) -> None:
        if name not in PROFILE_DOMAINS:
            raise SpecError(path, f"unknown profile field {name!r}")
        if len(self.values) == 0 or len(self.values) != len(self.weights):
            raise SpecError(f"{path}.weights", "need one weight per value and at least one value")
        bad = [v for v in self.values if v not in PROFILE_DOMAINS[name]]
        if bad:
            raise SpecError(f"{path}.values", f"{bad[0]!r} outside the {name} domain")
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise SpecError(f"{path}.weights", "weights must be finite and non-negative")
        if w.sum() <= 0:
            raise SpecError(f"{path}.weights", "degenerate distribution (weights sum to 0)")

    def probs(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()


def _uniform(values) -> Categorical:
    values = list(values)
    return Categorical(values, [1.0] * len(values))


def default_demographics() -> dict[str, Categorical]:
    return {
        "age": _uniform(range(18, 35)),
        "education_level": _uniform(range(1, 8)),
        "income_group": Categorical([1, 2, 3, 4], [0.3, 0.3, 0.25, 0.15]),
        "phone_owner": Categorical(["woman", "husband", "family"], [0.5, 0.35, 0.15]),
        "language": Categorical(["hindi", "marathi", "gujarati"], [0.6, 0.3, 0.1]),
        "call_slot": _uniform(cl.CALL_SLOTS),
        "gestation_age": _uniform(range(8, 31)),
    }


@dataclass
class Archetype:
    """Ground-truth behaviour shared by a share ``weight`` of the cohort.

    ``transitions`` are P(E,A,E), P(NE,A,NE), P(E,I,E), P(NE,I,NE).
    ``demographics`` overrides cohort-level distributions for members, which
    is how behaviour becomes predictable from the profile.
    """

    name: str
    transitions: tuple[float, float, float, float]
    connection_prob: float
    weight: float
    initial_engaged: float = 0.5
    demographics: dict[str, Categorical] = field(default_factory=dict)

    def __post_init__(self):
        self.transitions = tuple(float(x) for x in self.transitions)

    def validate(self, path: str) -> None:
        if len(self.transitions) != 4:
            raise SpecError(f"{path}.transitions", "need four probabilities")
        if not all(0.0 <= v <= 1.0 for v in self.transitions):
            raise SpecError(f"{path}.transitions", "probabilities must lie in [0, 1]")
        for name in ("connection_prob", "initial_engaged"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SpecError(f"{path}.{name}", f"{v} outside [0, 1]")
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise SpecError(f"{path}.weight", f"mixture weight {self.weight} must be non-negative")
        for f, cat in self.demographics.items():
            cat.validate(f, f"{path}.demographics.{f}")

    def mdp(self, beta: float = DEFAULT_BETA) -> MdpParams:
        return MdpParams.from_four(*self.transitions, beta=beta)


def default_archetypes() -> list[Archetype]:
    """Planted heterogeneity: one archetype turns around when called, one
    recovers by itself, one drifts away whatever is done.  Calibrated with
    scripts/calibrate_scenario.py."""
    return [
        Archetype("responsive", (0.99, 0.93, 0.99, 0.05), 0.75, 0.35, 0.3,
                  {"education_level": _uniform([5, 6, 7])}),
        Archetype("self_recovering", (0.85, 0.8, 0.9, 0.7), 0.75, 0.2, 0.5,
                  {"education_level": _uniform([3, 4])}),
        Archetype("disengaging", (0.7, 0.95, 0.75, 0.9), 0.6, 0.45, 0.4,
                  {"education_level": _uniform([1, 2])}),
    ]


@dataclass
class CohortSpec:
    n_beneficiaries: int = 1000
    archetypes: list[Archetype] = field(default_factory=default_archetypes)
    demographics: dict[str, Categorical] = field(default_factory=default_demographics)
    weeks: int = 40
    engage_prob_engaged: float = 0.8
    engage_prob_disengaged: float = 0.2
    retry_prob: float = 0.3
    start_date: date = date(2021, 1, 4)
    registration_spread_days: int = 28
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_beneficiaries < 0:
            raise SpecError("n_beneficiaries", "must be >= 0")
        if self.weeks < 1:
            raise SpecError("weeks", "must be >= 1")
        if self.registration_spread_days < 1:
            raise SpecError("registration_spread_days", "must be >= 1")
        for name in ("engage_prob_engaged", "engage_prob_disengaged"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SpecError(name, "must lie in [0, 1]")
        if not 0.0 <= self.retry_prob < 1.0:
            raise SpecError("retry_prob", "must lie in [0, 1)")
        if not self.archetypes:
            raise SpecError("archetypes", "need at least one archetype")
        names = [a.name for a in self.archetypes]
        if len(set(names)) != len(names):
            raise SpecError("archetypes", "archetype names must be unique")
        for i, a in enumerate(self.archetypes):
            a.validate(f"archetypes[{i}]")
        total = sum(a.weight for a in self.archetypes)
        if abs(total - 1.0) > 1e-9:
            raise SpecError("archetypes.weight", f"mixture weights sum to {total:g}, expected 1")
        missing = sorted(set(PROFILE_DOMAINS) - set(self.demographics))
        if missing:
            raise SpecError(f"demographics.{missing[0]}", "no distribution given")
        for f, cat in self.demographics.items():
            cat.validate(f, f"demographics.{f}")

    @property
    def n_months(self) -> int:
        """Months with at least one simulated day."""
        return -(-7 * self.weeks // MONTH_DAYS)


def zero_effect(spec: CohortSpec) -> CohortSpec:
    """Same cohort with interventions that do nothing (I behaves like A)."""
    arch = [replace(a, transitions=(a.transitions[0], a.transitions[1], a.transitions[0], a.transitions[1]))
            for a in spec.archetypes]
    return replace(spec, archetypes=arch)


# ---------------------------------------------------------------------------
# Cohorts


@dataclass
class Cohort:
    spec: CohortSpec
    profiles: list[BeneficiaryProfile]
    archetype: np.ndarray  # (n,) index into spec.archetypes

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def ids(self) -> list[str]:
        return [p.beneficiary_id for p in self.profiles]

    def profile_map(self) -> dict[str, BeneficiaryProfile]:
        return {p.beneficiary_id: p for p in self.profiles}

    def engage_next(self, sms_shift: float) -> np.ndarray:
        """P(next month E | state, action) per member, shape (n, 2, 3).

        Action 2 is SMS, which moves the probabilities ``sms_shift`` of the way
        from A towards I.
        """
        table = np.zeros((len(self.spec.archetypes), 2, 3))
        for k, a in enumerate(self.spec.archetypes):
            eae, nana, eie, nini = a.transitions
            table[k, 1, ACTION_A], table[k, 0, ACTION_A] = eae, 1.0 - nana
            table[k, 1, ACTION_I], table[k, 0, ACTION_I] = eie, 1.0 - nini
        table[:, :, ACTION_SMS] = table[:, :, ACTION_A] + sms_shift * (table[:, :, ACTION_I] - table[:, :, ACTION_A])
        return table[self.archetype]

    def ground_truth(self) -> dict:
        return {
            "archetypes": [
                {"name": a.name, "weight": a.weight, "connection_prob": a.connection_prob,
                 "initial_engaged": a.initial_engaged, "transitions": list(a.transitions),
                 "p": a.mdp().p.tolist()}
                for a in self.spec.archetypes
            ],
            "membership": {p.beneficiary_id: self.spec.archetypes[k].name for p, k in zip(self.profiles, self.archetype)},
        }


def generate_cohort(spec: CohortSpec) -> Cohort:
    """Seeded profiles and archetype memberships."""
    spec.validate()
    rng = substream(spec.seed, "cohort")
    n = spec.n_beneficiaries
    weights = np.array([a.weight for a in spec.archetypes], dtype=float)
    arch = rng.choice(len(weights), size=n, p=weights / weights.sum())
    columns: dict[str, np.ndarray] = {}
    for name in PROFILE_DOMAINS:
        col = np.empty(n, dtype=object)
        for k, a in enumerate(spec.archetypes):
            members = np.flatnonzero(arch == k)
            cat = a.demographics.get(name, spec.demographics[name])
            picks = rng.choice(len(cat.values), size=len(members), p=cat.probs())
            col[members] = [cat.values[j] for j in picks]
        columns[name] = col
    offsets = rng.integers(0, spec.registration_spread_days, size=n)
    width = max(6, len(str(max(n - 1, 0))))
    profiles = [
        BeneficiaryProfile(
            beneficiary_id=f"b{i:0{width}d}",
            age=int(columns["age"][i]),
            education_level=int(columns["education_level"][i]),
            income_group=int(columns["income_group"][i]),
            phone_owner=str(columns["phone_owner"][i]),
            registration_date=spec.start_date + timedelta(days=int(offsets[i])),
            gestation_age=int(columns["gestation_age"][i]),
            language=str(columns["language"][i]),
            call_slot=str(columns["call_slot"][i]),
        )
        for i in range(n)
    ]
    return Cohort(spec, profiles, arch.astype(np.int64))


# ---------------------------------------------------------------------------
# Programme simulation


@dataclass
class InterventionConfig:
    call_success: float = 0.452
    # An SMS has this fraction of the expected effect of a planned call, i.e. it
    # shifts transitions sms_effect * call_success of the way from A towards I.
    sms_effect: float = 0.3
    explore_call_prob: float = 0.3  # monthly chance of a call in generated training data

    def __post_init__(self):
        for name in ("call_success", "sms_effect", "explore_call_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SpecError(name, "must lie in [0, 1]")


@dataclass
class Schedule:
    """Planned interventions: member index, day from registration, kind code."""

    index: np.ndarray
    day: np.ndarray
    kind: np.ndarray

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64).ravel()
        self.day = np.asarray(self.day, dtype=np.int64).ravel()
        self.kind = np.asarray(self.kind, dtype=np.int64).ravel()
        if not len(self.index) == len(self.day) == len(self.kind):
            raise SimError("schedule columns differ in length")

    @classmethod
    def empty(cls) -> "Schedule":
        return cls([], [], [])

    @classmethod
    def at(cls, index, day: int, kind: int) -> "Schedule":
        index = np.asarray(index, dtype=np.int64).ravel()
        return cls(index, np.full(len(index), day), np.full(len(index), kind))

    def __add__(self, other: "Schedule") -> "Schedule":
        return Schedule(np.concatenate([self.index, other.index]), np.concatenate([self.day, other.day]),
                        np.concatenate([self.kind, other.kind]))

    def __len__(self) -> int:
        return len(self.index)


def call_schedule(weeks: int) -> np.ndarray:
    return (7 * np.arange(weeks)[:, None] + np.array(CALL_WEEKDAYS)[None, :]).ravel()


def exploration_schedule(cohort: Cohort, prob: float, seed: int) -> Schedule:
    """A call on a random day of each month with probability ``prob``."""
    rng = substream(seed, "explore")
    n, m = len(cohort), cohort.spec.n_months
    hit = rng.random((n, m)) < prob
    day = MONTH_DAYS * np.arange(m)[None, :] + rng.integers(0, MONTH_DAYS, size=(n, m))
    keep = hit & (day < 7 * cohort.spec.weeks)
    idx, mon = np.nonzero(keep)
    return Schedule(idx, day[idx, mon], np.full(len(idx), CALL))


@dataclass
class SimOutcome:
    cohort: Cohort
    schedule: Schedule
    delivered: np.ndarray  # per schedule entry; SMS always delivered
    call_days: np.ndarray  # (C,)
    connected: np.ndarray  # (n, C)
    engaged: np.ndarray  # (n, C)
    duration: np.ndarray  # (n, C) seconds of the surviving attempt
    retries: np.ndarray  # (n, C) failed attempts logged before the final one
    states: np.ndarray  # (n, M) latent
    actions: np.ndarray  # (n, M) effective: 0 A, 1 I, 2 SMS

    @property
    def n_observed_months(self) -> int:
        """Complete months covered by the call log."""
        return 7 * self.cohort.spec.weeks // MONTH_DAYS

    def window_counts(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sel = (self.call_days >= lo) & (self.call_days < hi)
        n = len(self.cohort)
        return (np.full(n, int(sel.sum())), self.connected[:, sel].sum(axis=1), self.engaged[:, sel].sum(axis=1))

    def e2c(self, lo: int, hi: int) -> np.ndarray:
        _, conn, eng = self.window_counts(lo, hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(conn > 0, eng / np.maximum(conn, 1), np.nan)

    def high_engagement(self, lo: int, hi: int, threshold: float = E2C_THRESHOLD) -> np.ndarray:
        r = self.e2c(lo, hi)
        return np.where(np.isnan(r), False, r > threshold)

    def observed_states(self, threshold: float = E2C_THRESHOLD) -> np.ndarray:
        """E iff a month has connections and E2C >= threshold; complete months only."""
        m = self.n_observed_months
        month = self.call_days // MONTH_DAYS
        onehot = (month[:, None] == np.arange(m)[None, :]).astype(np.int64)
        conn = self.connected.astype(np.int64) @ onehot
        eng = self.engaged.astype(np.int64) @ onehot
        return ((conn > 0) & (eng >= threshold * conn)).astype(np.int64)

    def transition_counts(self, observed: bool = True) -> np.ndarray:
        """(n, 2, 2, 2) counts; only a delivered call counts as action I."""
        s = self.observed_states() if observed else self.states
        m = s.shape[1]
        a = (self.actions[:, :m] == ACTION_I).astype(np.int64)
        out = np.zeros((len(self.cohort), 2, 2, 2), dtype=np.int64)
        if m < 2:
            return out
        rows = np.repeat(np.arange(len(self.cohort)), m - 1)
        np.add.at(out, (rows, s[:, :-1].ravel(), a[:, :-1].ravel(), s[:, 1:].ravel()), 1)
        return out

    def counts_by_id(self, observed: bool = True) -> dict[str, TransitionCounts]:
        c = self.transition_counts(observed)
        return {b: TransitionCounts(c[i]) for i, b in enumerate(self.cohort.ids)}

    def end_dates(self) -> dict[str, date]:
        span = timedelta(days=7 * self.cohort.spec.weeks)
        return {p.beneficiary_id: p.registration_date + span for p in self.cohort.profiles}

    def records(self) -> list[CallRecord]:
        out = []
        for i, p in enumerate(self.cohort.profiles):
            bid, reg = p.beneficiary_id, p.registration_date
            for c, d in enumerate(self.call_days):
                day = reg + timedelta(days=int(d))
                group = f"{bid}-{c:03d}"
                for _ in range(int(self.retries[i, c])):
                    out.append(CallRecord(bid, day, c, 0.0, False, group))
                ok = bool(self.connected[i, c])
                out.append(CallRecord(bid, day, c, float(self.duration[i, c]), ok, group))
        return out

    def interventions(self) -> list[Intervention]:
        sch = self.schedule
        order = np.lexsort((sch.kind, sch.day, sch.index))
        out = []
        for j in order:
            p = self.cohort.profiles[sch.index[j]]
            out.append(Intervention(p.beneficiary_id, p.registration_date + timedelta(days=int(sch.day[j])),
                                    KIND_NAMES[int(sch.kind[j])], bool(self.delivered[j])))
        return out

    def histories(self) -> dict[str, CallHistory]:
        return cl.build_histories(self.records(), end=self.end_dates())


def simulate_program(
    cohort: Cohort,
    schedule: Schedule | None = None,
    seed: int = 0,
    config: InterventionConfig | None = None,
) -> SimOutcome:
    """Run the call programme for ``cohort.spec.weeks`` weeks under ``schedule``.

    A month's action is I if it holds a delivered call, SMS if it holds an SMS
    (and no delivered call), A otherwise.  The state of month m+1 is drawn from
    the member's ground truth given the state and action of month m.
    """
    config = config or InterventionConfig()
    schedule = schedule if schedule is not None else Schedule.empty()
    spec = cohort.spec
    n, n_months = len(cohort), spec.n_months
    days = call_schedule(spec.weeks)
    n_calls = len(days)
    if len(schedule):
        if schedule.index.min() < 0 or schedule.index.max() >= n:
            raise SimError("schedule refers to a beneficiary outside the cohort")
        if schedule.day.min() < 0 or schedule.day.max() >= 7 * spec.weeks:
            raise SimError(f"schedule days must lie in [0, {7 * spec.weeks})")
        if not np.isin(schedule.kind, (CALL, SMS)).all():
            raise SimError("schedule kinds must be CALL or SMS")

    rng = substream(seed, "program")
    u_init = rng.random(n)
    u_trans = rng.random((n, n_months))
    u_deliver = rng.random((n, n_months))
    u_conn = rng.random((n, n_calls))
    u_eng = rng.random((n, n_calls))
    u_dur = rng.random((n, n_calls))
    u_retry = rng.random((n, n_calls))

    month = schedule.day // MONTH_DAYS
    delivered = np.where(schedule.kind == CALL, u_deliver[schedule.index, month] < config.call_success, True)
    actions = np.zeros((n, n_months), dtype=np.int64)
    sms = schedule.kind == SMS
    actions[schedule.index[sms], month[sms]] = ACTION_SMS
    ok_call = (schedule.kind == CALL) & delivered
    actions[schedule.index[ok_call], month[ok_call]] = ACTION_I

    arch = spec.archetypes
    p_next = cohort.engage_next(config.sms_effect * config.call_success)
    init = np.array([a.initial_engaged for a in arch])[cohort.archetype] if n else np.zeros(0)
    states = np.zeros((n, n_months), dtype=np.int64)
    states[:, 0] = u_init < init
    rows = np.arange(n)
    for m in range(n_months - 1):
        states[:, m + 1] = u_trans[:, m] < p_next[rows, states[:, m], actions[:, m]]

    q = np.array([a.connection_prob for a in arch])[cohort.archetype] if n else np.zeros(0)
    connected = u_conn < q[:, None]
    pe = np.array([spec.engage_prob_disengaged, spec.engage_prob_engaged])[states[:, days // MONTH_DAYS]]
    engaged = connected & (u_eng < pe)
    secs = np.where(engaged, 31 + np.floor(u_dur * 90), 1 + np.floor(u_dur * 30))
    duration = np.where(connected, secs, 0).astype(np.int64)
    r = spec.retry_prob
    retries = (u_retry < r).astype(np.int64) + (u_retry < r * r)
    return SimOutcome(cohort, schedule, delivered, days, connected, engaged, duration, retries, states, actions)


# ---------------------------------------------------------------------------
# Four-arm study


class Arm(str, enum.Enum):
    CONTROL = "control"
    SMS = "sms"
    HYBRID = "hybrid"
    CALL = "call"


ARM_ORDER = (Arm.CONTROL, Arm.SMS, Arm.HYBRID, Arm.CALL)


@dataclass
class PoolFilter:
    """Who enters an intervention study: predicted low engagers who still engage a little."""

    enabled: bool = True
    feature_days: int = 30
    max_e2c: float = E2C_THRESHOLD
    engagement_days: int = 60
    min_engagements: int = 2


def intervention_pool(outcome: SimOutcome, pool: PoolFilter) -> np.ndarray:
    """Member indices whose first month looks at risk (E2C below the bar, or no
    connections) and who engaged at least ``min_engagements`` times early on."""
    n = len(outcome.cohort)
    if not pool.enabled:
        return np.arange(n)
    r = outcome.e2c(0, pool.feature_days)
    at_risk = np.isnan(r) | (r < pool.max_e2c)
    _, _, eng = outcome.window_counts(0, pool.engagement_days)
    return np.flatnonzero(at_risk & (eng >= pool.min_engagements))


@dataclass
class ArmAssignment:
    arms: dict[str, Arm | None]

    def members(self, arm: Arm) -> list[str]:
        return sorted(b for b, a in self.arms.items() if a == arm)

    def sizes(self) -> dict[str, int]:
        return {a.value: len(self.members(a)) for a in ARM_ORDER}


def _stratum(p: BeneficiaryProfile) -> tuple:
    return (p.education_level, p.phone_owner, int(np.searchsorted(AGE_EDGES, p.age, side="right")))


def assign_arms(cohort: Cohort, members: Sequence[int], seed: int, arms: Sequence[Arm] = ARM_ORDER) -> ArmAssignment:
    """Stratified assignment: shuffle, group by demographic stratum, deal arms in turn."""
    rng = substream(seed, "arms")
    members = np.sort(np.asarray(members, dtype=np.int64))
    perm = members[rng.permutation(len(members))]
    order = sorted(range(len(perm)), key=lambda j: _stratum(cohort.profiles[perm[j]]))
    start = int(rng.integers(len(arms))) if len(arms) else 0
    out: dict[str, Arm | None] = {}
    for pos, j in enumerate(order):
        out[cohort.profiles[perm[j]].beneficiary_id] = arms[(start + pos) % len(arms)]
    return ArmAssignment(out)


@dataclass
class PsqisConfig:
    n_beneficiaries: int = 40000
    start_month: int = 2
    post_days: int = 105
    hybrid_wait_days: int = 42

    @property
    def start_day(self) -> int:
        return MONTH_DAYS * self.start_month

    @property
    def weeks(self) -> int:
        return -(-(self.start_day + max(self.post_days, self.hybrid_wait_days)) // 7)


@dataclass
class PsqisResult:
    percent: dict[str, float]
    n: dict[str, int]
    high: dict[str, bool]
    hybrid_called: list[str]
    outcome: SimOutcome
    assignment: ArmAssignment

    def summary(self) -> dict:
        return {"percent_high_engagement": {a.value: self.percent[a.value] for a in ARM_ORDER if a.value in self.percent},
                "n": dict(self.n), "hybrid_called": len(self.hybrid_called)}


def run_psqis(
    cohort: Cohort,
    assignment: ArmAssignment,
    config: PsqisConfig | None = None,
    interventions: InterventionConfig | None = None,
    seed: int = 0,
) -> PsqisResult:
    """Share of each arm with post-period E2C above 0.5.

    Control gets nothing, SMS an SMS and Call a call on the first day.  Hybrid
    gets the SMS, then a call ``hybrid_wait_days`` later for members whose E2C
    over the waiting window stayed below 0.5.
    """
    config = config or PsqisConfig()
    index = {b: i for i, b in enumerate(cohort.ids)}
    unknown = sorted(b for b in assignment.arms if b not in index)
    if unknown:
        raise SimError(f"assignment names beneficiaries outside the cohort, e.g. {unknown[0]}")
    unassigned = sorted(b for b, a in assignment.arms.items() if not isinstance(a, Arm))
    if unassigned:
        raise SimError(f"{len(unassigned)} pool members have no arm, e.g. {unassigned[0]}")
    day0 = config.start_day
    if day0 + config.post_days > 7 * cohort.spec.weeks:
        raise SimError("cohort is simulated for fewer weeks than the study needs")
    idx = {a: np.array([index[b] for b in assignment.members(a)], dtype=np.int64) for a in ARM_ORDER}
    base = (Schedule.at(idx[Arm.SMS], day0, SMS) + Schedule.at(idx[Arm.CALL], day0, CALL)
            + Schedule.at(idx[Arm.HYBRID], day0, SMS))
    first = simulate_program(cohort, base, seed, interventions)
    wait = first.e2c(day0, day0 + config.hybrid_wait_days)[idx[Arm.HYBRID]]
    responded = np.where(np.isnan(wait), False, wait >= E2C_THRESHOLD)
    late = idx[Arm.HYBRID][~responded]
    outcome = simulate_program(cohort, base + Schedule.at(late, day0 + config.hybrid_wait_days, CALL), seed,
                               interventions)
    high = outcome.high_engagement(day0, day0 + config.post_days)
    percent, sizes = {}, {}
    for a in ARM_ORDER:
        sizes[a.value] = len(idx[a])
        percent[a.value] = 100.0 * float(high[idx[a]].mean()) if len(idx[a]) else math.nan
    ids = cohort.ids
    members = sorted(assignment.arms)
    return PsqisResult(percent, sizes, {b: bool(high[index[b]]) for b in members},
                       sorted(ids[i] for i in late), outcome, assignment)


# ---------------------------------------------------------------------------
# Planning evaluation

POLICIES = ("whittle", "random", "myopic", "noop")


@dataclass
class PlanningConfig:
    n_train: int = 10000
    train_weeks: int = 52
    n_eval: int = 4000
    start_month: int = 2
    post_days: int = 105
    k: int = 100
    runs: int = 50
    n_clusters: int = 20
    alpha: float = 1.0
    beta: float = DEFAULT_BETA
    replan_months: int = 0  # 0: plan once on the first intervention day

    def __post_init__(self):
        if self.replan_months < 0:
            raise ConfigError("replan_months", "must be >= 0")

    @property
    def start_day(self) -> int:
        return MONTH_DAYS * self.start_month

    def epoch_months(self) -> list[int]:
        """Months at which the call arm is (re)planned."""
        if self.replan_months == 0:
            return [self.start_month]
        end = self.start_day + self.post_days
        return list(range(self.start_month, -(-end // MONTH_DAYS), self.replan_months))

    @property
    def eval_weeks(self) -> int:
        return -(-(self.start_day + self.post_days) // 7)


@dataclass
class Scenario:
    cohort: CohortSpec = field(default_factory=CohortSpec)
    interventions: InterventionConfig = field(default_factory=InterventionConfig)
    pool: PoolFilter = field(default_factory=PoolFilter)
    psqis: PsqisConfig = field(default_factory=PsqisConfig)
    planning: PlanningConfig = field(default_factory=PlanningConfig)


def psqis_experiment(scenario: Scenario, seed: int = 0) -> PsqisResult:
    """Generate a cohort, pick the pool, assign arms and run the study."""
    pc = scenario.psqis
    spec = replace(scenario.cohort, n_beneficiaries=pc.n_beneficiaries, weeks=pc.weeks,
                   seed=child_seed(seed, "psqis", "cohort"))
    cohort = generate_cohort(spec)
    sim_seed = child_seed(seed, "psqis", "program")
    pre = simulate_program(cohort, None, sim_seed, scenario.interventions)
    members = intervention_pool(pre, scenario.pool)
    assignment = assign_arms(cohort, members, child_seed(seed, "psqis", "arms"))
    return run_psqis(cohort, assignment, pc, scenario.interventions, sim_seed)


def train_planning_model(scenario: Scenario, seed: int = 0) -> ClusterModel:
    """Cluster model fitted on a training cohort with random exploratory calls."""
    pc = scenario.planning
    spec = replace(scenario.cohort, n_beneficiaries=pc.n_train, weeks=pc.train_weeks,
                   seed=child_seed(seed, "planning", "cohort"))
    cohort = generate_cohort(spec)
    sched = exploration_schedule(cohort, scenario.interventions.explore_call_prob, child_seed(seed, "planning"))
    out = simulate_program(cohort, sched, child_seed(seed, "planning", "program"), scenario.interventions)
    model = fit_cluster_model(cohort.profile_map(), out.counts_by_id(), pc.n_clusters, pc.alpha, pc.beta,
                              child_seed(seed, "planning", "kmeans"))
    model.compute_indices()
    return model


def policy_scores(policy: str, ids: Sequence[str], states: Mapping[str, int], rng: np.random.Generator,
                  model: ClusterModel | None = None,
                  profiles: Mapping[str, BeneficiaryProfile] | None = None) -> dict[str, float]:
    """Higher score = earlier pick.  Random components come from ``rng``."""
    noise = rng.random(len(ids))
    if policy == "whittle":
        if model is None or profiles is None:
            raise SimError("the whittle policy needs a cluster model and profiles")
        return {b: model.index(model.cluster_of(profiles[b]), states[b]) for b in ids}
    if policy in ("random", "noop"):
        return {b: float(u) for b, u in zip(ids, noise)}
    if policy == "myopic":
        return {b: float(states[b] == NE) + 0.5 * float(u) for b, u in zip(ids, noise)}
    raise SimError(f"unknown policy {policy!r}; choose from {POLICIES}")


@dataclass
class PolicyEvaluation:
    k: int
    runs: int
    call: dict[str, np.ndarray]
    control: dict[str, np.ndarray]

    def gap(self, policy: str) -> np.ndarray:
        return self.call[policy] - self.control[policy]

    @staticmethod
    def _mean_std(x: np.ndarray) -> tuple[float, float]:
        return float(np.mean(x)), float(np.std(x, ddof=1)) if len(x) > 1 else 0.0

    def summary(self) -> dict:
        out = {}
        for p in self.call:
            row = {}
            for name, x in (("call", self.call[p]), ("control", self.control[p]), ("gap", self.gap(p))):
                row[f"{name}_mean"], row[f"{name}_std"] = self._mean_std(x)
            out[p] = row
        return out

    def table(self) -> str:
        lines = [f"top-{self.k} overlap with high post-period engagement (%), {self.runs} runs",
                 f"{'policy':<10}{'call':>16}{'control':>16}{'gap':>16}"]
        for p, row in self.summary().items():
            cells = "".join(f"{row[c + '_mean']:>9.1f} ± {row[c + '_std']:<4.1f}" for c in ("call", "control", "gap"))
            lines.append(f"{p:<10}{cells}")
        return "\n".join(lines) + "\n"


def evaluate_policy(
    scenario: Scenario,
    model: ClusterModel | None,
    policies: Sequence[str] = POLICIES,
    k: int | None = None,
    runs: int | None = None,
    seed: int = 0,
) -> PolicyEvaluation:
    """Per run: fresh cohort, pre-period, random call/control split, top-k per
    policy in each arm, calls for the call-arm picks (none for ``noop``), and
    the overlap of the picks with post-period high engagement.

    With ``replan_months > 0`` the call arm is re-ranked on freshly observed
    states every that many months and the new top-k are called too; the
    overlap is still scored on the first-day picks.

    All policies of a run share the cohort, the split and the programme noise.
    """
    pc = scenario.planning
    k = pc.k if k is None else k
    runs = pc.runs if runs is None else runs
    if runs < 1:
        raise SimError("runs must be >= 1")
    for p in policies:
        if p not in POLICIES:
            raise SimError(f"unknown policy {p!r}; choose from {POLICIES}")
    day0 = pc.start_day
    call = {p: np.zeros(runs) for p in policies}
    control = {p: np.zeros(runs) for p in policies}
    for r in range(runs):
        spec = replace(scenario.cohort, n_beneficiaries=pc.n_eval, weeks=pc.eval_weeks,
                       seed=child_seed(seed, "eval", r, "cohort"))
        cohort = generate_cohort(spec)
        sim_seed = child_seed(seed, "eval", r, "program")
        pre = simulate_program(cohort, None, sim_seed, scenario.interventions)
        members = intervention_pool(pre, scenario.pool)
        perm = members[substream(seed, "eval", r, "arms").permutation(len(members))]
        half = len(perm) // 2
        call_idx, ctrl_idx = np.sort(perm[:half]), np.sort(perm[half:])
        if k < 1 or k > min(len(call_idx), len(ctrl_idx)):
            raise SimError(f"k={k} but the arms hold {len(call_idx)} and {len(ctrl_idx)} beneficiaries")
        ids = cohort.ids
        obs = pre.observed_states()[:, pc.start_month - 1]
        states = {ids[i]: int(obs[i]) for i in members}
        profiles = cohort.profile_map()
        index = {b: i for i, b in enumerate(ids)}
        for p in policies:
            rng = substream(seed, "eval", r, "policy", p)
            arm_ids = [[ids[i] for i in call_idx], [ids[i] for i in ctrl_idx]]
            picks = []
            for group in arm_ids:
                scores = policy_scores(p, group, states, rng, model, profiles)
                picks.append(rank_by_index(scores)[:k])
            sched = Schedule.empty() if p == "noop" else Schedule.at([index[b] for b in picks[0]], day0, CALL)
            out = simulate_program(cohort, sched, sim_seed, scenario.interventions)
            for m in pc.epoch_months()[1:]:
                if p == "noop":
                    break
                # re-rank the call arm on the states observed under the calls so far
                obs_m = out.observed_states()[:, m - 1]
                st = {ids[i]: int(obs_m[i]) for i in call_idx}
                again = rank_by_index(policy_scores(p, arm_ids[0], st, rng, model, profiles))[:k]
                sched = sched + Schedule.at([index[b] for b in again], MONTH_DAYS * m, CALL)
                out = simulate_program(cohort, sched, sim_seed, scenario.interventions)
            high = out.high_engagement(day0, day0 + pc.post_days)
            high_ids = {ids[i] for i in np.flatnonzero(high)}
            call[p][r] = overlap_metric(picks[0], high_ids)
            control[p][r] = overlap_metric(picks[1], high_ids)
    return PolicyEvaluation(k, runs, call, control)


# ---------------------------------------------------------------------------
# Scenario files (JSON)


def _categoricals(data, path: str) -> dict[str, Categorical]:
    if not isinstance(data, Mapping):
        raise SpecError(path, "expected an object of field -> {values, weights}")
    out = {}
    for name, d in data.items():
        p = f"{path}.{name}"
        if not isinstance(d, Mapping) or set(d) != {"values", "weights"}:
            raise SpecError(p, "expected {\"values\": [...], \"weights\": [...]}")
        if not isinstance(d["values"], list) or not isinstance(d["weights"], list):
            raise SpecError(p, "values and weights must be lists")
        for w in d["weights"]:
            check_type(w, 0.0, f"{p}.weights")
        cat = Categorical(list(d["values"]), [float(w) for w in d["weights"]])
        cat.validate(name, p)
        out[name] = cat
    return out


def _archetype(data, path: str) -> Archetype:
    def transitions(v, p):
        if isinstance(v, Mapping):
            keys = ("eae", "nana", "eie", "nini")
            if set(v) != set(keys):
                raise SpecError(p, f"expected keys {keys}")
            v = [v[k] for k in keys]
        if not isinstance(v, list) or len(v) != 4:
            raise SpecError(p, "expected four probabilities")
        return tuple(check_type(x, 0.0, p) for x in v)

    if not isinstance(data, Mapping) or "name" not in data:
        raise SpecError(path, "archetype needs at least a name")
    required = [k for k in ("transitions", "connection_prob", "weight") if k not in data]
    if required:
        raise SpecError(f"{path}.{required[0]}", "missing")
    a = build_dataclass(Archetype, data, path, {"transitions": transitions, "demographics": _categoricals})
    try:
        a.validate("")
    except SpecError as exc:
        raise SpecError(f"{path}{exc.field}", exc.message) from None
    return a


def _cohort(data, path: str) -> CohortSpec:
    def archetypes(v, p):
        if not isinstance(v, list):
            raise SpecError(p, "expected a list")
        return [_archetype(a, f"{p}[{i}]") for i, a in enumerate(v)]

    def demographics(v, p):
        return {**default_demographics(), **_categoricals(v, p)}

    def start(v, p):
        try:
            return date.fromisoformat(v)
        except (TypeError, ValueError):
            raise SpecError(p, f"expected an ISO date, got {v!r}") from None

    return build_dataclass(CohortSpec, data, path, {"archetypes": archetypes, "demographics": demographics, "start_date": start})


def scenario_from_dict(data: Mapping) -> Scenario:
    sections = {"cohort": _cohort,
                "interventions": lambda d, p: build_dataclass(InterventionConfig, d, p),
                "pool": lambda d, p: build_dataclass(PoolFilter, d, p),
                "psqis": lambda d, p: build_dataclass(PsqisConfig, d, p),
                "planning": lambda d, p: build_dataclass(PlanningConfig, d, p)}
    if not isinstance(data, Mapping):
        raise SpecError("scenario", "expected a JSON object")
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise SpecError(unknown[0], "unknown section")
    return Scenario(**{k: sections[k](data[k], k) for k in data})


def scenario_to_dict(s: Scenario) -> dict:
    return json.loads(json.dumps(asdict(s), default=lambda o: o.isoformat() if isinstance(o, date) else str(o)))


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError("scenario", f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return scenario_from_dict(data)


def default_scenario() -> Scenario:
    return Scenario()
