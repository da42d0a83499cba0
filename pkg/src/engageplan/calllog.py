"""Call-log semantics: attempts, connections, engagements and the features
and labels derived from them.

A scheduled call may be retried several times (one ``attempt_group``); only the
longest retry is kept.  Every kept call is an Attempt, picked-up calls are
Connections, and connections lasting strictly more than 30 seconds are
Engagements.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np

ENGAGEMENT_SECONDS = 30.0
T_MAX = 8
SHORT_FEATURE_DAYS = 28
SHORT_LABEL_DAYS = 14
LONG_FEATURE_DAYS = 30
LONG_MIN_SPAN_DAYS = 240
LONG_MIN_CONNECTIONS = 24
E2C_THRESHOLD = 0.5

# per-call channels of the dynamic matrix
DYNAMIC_CHANNELS = ("duration", "success", "engagement", "day_offset", "message_bucket")
MESSAGE_BUCKET_SIZE = 10


class CallLogError(ValueError):
    pass


class RejectedRecord(CallLogError):
    pass


class NoConnections(CallLogError):
    pass


class SampleUnavailable(CallLogError):
    pass


class Excluded(CallLogError):
    pass


class TruncatedSequenceWarning(UserWarning):
    pass


class EventKind(enum.IntEnum):
    ATTEMPT = 0
    CONNECTION = 1
    ENGAGEMENT = 2


class EngagementLabel(enum.Enum):
    SHORT_TERM_HIGH_RISK = "high_risk"
    SHORT_TERM_LOW_RISK = "low_risk"
    LLTE = "LLTE"
    HLTE = "HLTE"

    @property
    def is_positive(self) -> bool:
        """High risk and LLTE are the classes metrics are reported over."""
        return self in (EngagementLabel.SHORT_TERM_HIGH_RISK, EngagementLabel.LLTE)

    @property
    def task(self) -> str:
        if self in (EngagementLabel.LLTE, EngagementLabel.HLTE):
            return "long"
        return "short"


@dataclass(frozen=True)
class CallRecord:
    beneficiary_id: str
    call_date: date
    message_id: int
    duration: float
    success: bool
    attempt_group: str


@dataclass(frozen=True)
class CallEvent:
    kind: EventKind
    date: date
    duration: float
    message_id: int = 0

    @property
    def connected(self) -> bool:
        return self.kind >= EventKind.CONNECTION

    @property
    def engaged(self) -> bool:
        return self.kind == EventKind.ENGAGEMENT


# ---------------------------------------------------------------------------
# Beneficiary profiles

EDUCATION_LEVELS = tuple(range(1, 8))
INCOME_GROUPS = tuple(range(0, 11))
PHONE_OWNERS = ("woman", "husband", "family")
LANGUAGES = ("hindi", "marathi", "gujarati")
CALL_SLOTS = ("1", "2", "3", "4", "5", "6")
AGE_RANGE = (12, 60)
GESTATION_RANGE = (0, 45)


@dataclass(frozen=True)
class BeneficiaryProfile:
    beneficiary_id: str
    age: int
    education_level: int
    income_group: int
    phone_owner: str
    registration_date: date
    gestation_age: int
    language: str
    call_slot: str

    def __post_init__(self):
        validate_profile(self)


def validate_profile(p: BeneficiaryProfile) -> None:
    if not AGE_RANGE[0] <= p.age <= AGE_RANGE[1]:
        raise RejectedRecord(f"age {p.age} outside {AGE_RANGE}")
    if p.education_level not in EDUCATION_LEVELS:
        raise RejectedRecord(f"education_level {p.education_level} not in {EDUCATION_LEVELS}")
    if p.income_group not in INCOME_GROUPS:
        raise RejectedRecord(f"income_group {p.income_group} not in {INCOME_GROUPS}")
    if p.phone_owner not in PHONE_OWNERS:
        raise RejectedRecord(f"phone_owner {p.phone_owner!r} not in {PHONE_OWNERS}")
    if not GESTATION_RANGE[0] <= p.gestation_age <= GESTATION_RANGE[1]:
        raise RejectedRecord(f"gestation_age {p.gestation_age} outside {GESTATION_RANGE}")
    if p.language not in LANGUAGES:
        raise RejectedRecord(f"language {p.language!r} not in {LANGUAGES}")
    if p.call_slot not in CALL_SLOTS:
        raise RejectedRecord(f"call_slot {p.call_slot!r} not in {CALL_SLOTS}")


STATIC_FEATURE_NAMES = (
    ["age", "education_level", "income_group", "gestation_age"]
    + [f"phone_owner={v}" for v in PHONE_OWNERS]
    + [f"language={v}" for v in LANGUAGES]
    + [f"call_slot={v}" for v in CALL_SLOTS]
)


def encode_profile(p: BeneficiaryProfile) -> np.ndarray:
    """Ordinals stay integers, categoricals are one-hot."""
    onehots = []
    for value, domain in ((p.phone_owner, PHONE_OWNERS), (p.language, LANGUAGES), (p.call_slot, CALL_SLOTS)):
        onehots.extend(1.0 if value == v else 0.0 for v in domain)
    return np.array([p.age, p.education_level, p.income_group, p.gestation_age] + onehots, dtype=float)


# ---------------------------------------------------------------------------
# Records -> events


def dedup_attempts(records: Sequence[CallRecord]) -> list[CallRecord]:
    """Keep the longest retry of each attempt group.

    Ties go to a successful retry, then to the earliest record.  Output keeps
    the input order of the surviving records.
    """
    best: dict[tuple[str, str], int] = {}
    for i, rec in enumerate(records):
        key = (rec.beneficiary_id, rec.attempt_group)
        j = best.get(key)
        if j is None:
            best[key] = i
            continue
        cur = records[j]
        if (rec.duration, rec.success) > (cur.duration, cur.success):
            best[key] = i
    keep = sorted(best.values())
    return [records[i] for i in keep]


def classify_call(record: CallRecord, engagement_seconds: float = ENGAGEMENT_SECONDS) -> CallEvent:
    if record.duration < 0:
        raise RejectedRecord(f"negative duration {record.duration} for {record.beneficiary_id}")
    if not record.success:
        kind = EventKind.ATTEMPT
    elif record.duration > engagement_seconds:
        kind = EventKind.ENGAGEMENT
    else:
        kind = EventKind.CONNECTION
    return CallEvent(kind, record.call_date, float(record.duration), int(record.message_id))


@dataclass(frozen=True)
class CallHistory:
    """Time-ordered call events of one beneficiary.

    ``end`` is the first day not covered by the log (exclusive).  When not
    given it defaults to the day after the last event.
    """

    beneficiary_id: str
    events: tuple[CallEvent, ...] = ()
    end: date | None = None

    def __post_init__(self):
        ordered = tuple(sorted(self.events, key=lambda e: e.date))
        object.__setattr__(self, "events", ordered)
        if self.end is None and ordered:
            object.__setattr__(self, "end", ordered[-1].date + timedelta(days=1))

    def window(self, start: date, stop: date) -> list[CallEvent]:
        """Events with ``start <= date < stop``."""
        return [e for e in self.events if start <= e.date < stop]

    def counts(self, start: date, stop: date) -> tuple[int, int, int]:
        return event_counts(self.window(start, stop))


def event_counts(events: Iterable[CallEvent]) -> tuple[int, int, int]:
    a = c = e = 0
    for ev in events:
        a += 1
        if ev.kind >= EventKind.CONNECTION:
            c += 1
        if ev.kind == EventKind.ENGAGEMENT:
            e += 1
    return a, c, e


def build_history(
    beneficiary_id: str,
    records: Sequence[CallRecord],
    end: date | None = None,
    engagement_seconds: float = ENGAGEMENT_SECONDS,
) -> CallHistory:
    recs = [r for r in records if r.beneficiary_id == beneficiary_id]
    events = [classify_call(r, engagement_seconds) for r in dedup_attempts(recs)]
    return CallHistory(beneficiary_id, tuple(events), end)


def build_histories(
    records: Sequence[CallRecord],
    end: date | dict[str, date] | None = None,
    engagement_seconds: float = ENGAGEMENT_SECONDS,
) -> dict[str, CallHistory]:
    by_id: dict[str, list[CallRecord]] = {}
    for r in records:
        by_id.setdefault(r.beneficiary_id, []).append(r)
    out = {}
    for bid in sorted(by_id):
        stop = end.get(bid) if isinstance(end, dict) else end
        events = [classify_call(r, engagement_seconds) for r in dedup_attempts(by_id[bid])]
        out[bid] = CallHistory(bid, tuple(events), stop)
    return out


def check_history(history: CallHistory, max_per_week: int = 2) -> None:
    """Raise if the history breaks ordering or the twice-weekly cadence."""
    dates = [e.date for e in history.events]
    if dates != sorted(dates):
        raise CallLogError(f"{history.beneficiary_id}: events not time ordered")
    if not dates:
        return
    origin = dates[0]
    per_week: dict[int, int] = {}
    for d in dates:
        w = (d - origin).days // 7
        per_week[w] = per_week.get(w, 0) + 1
        if per_week[w] > max_per_week:
            raise CallLogError(f"{history.beneficiary_id}: more than {max_per_week} attempts in week {w}")


# ---------------------------------------------------------------------------
# Ratios and features


def e2c_ratio(history: CallHistory, start: date, stop: date) -> float:
    _, conn, eng = history.counts(start, stop)
    if conn == 0:
        raise NoConnections(f"{history.beneficiary_id}: no connections in [{start}, {stop})")
    return eng / conn


def extract_scalar_features(
    history: CallHistory,
    as_of: date,
    window_days: int = SHORT_FEATURE_DAYS,
    sentinel: float | None = None,
) -> np.ndarray:
    """Counts and day gaps over ``[as_of - window_days, as_of)``.

    Returns (attempts, connections, engagements, days since last attempt,
    days since last connection, days since last engagement).  A missing event
    gets ``sentinel``, by default ``window_days + 1``.
    """
    if sentinel is None:
        sentinel = window_days + 1
    events = history.window(as_of - timedelta(days=window_days), as_of)
    counts = event_counts(events)
    gaps = []
    for kind in (EventKind.ATTEMPT, EventKind.CONNECTION, EventKind.ENGAGEMENT):
        last = [e.date for e in events if e.kind >= kind]
        gaps.append((as_of - max(last)).days if last else sentinel)
    return np.array(list(counts) + gaps, dtype=float)


def build_sequence(
    history: CallHistory,
    as_of: date,
    window_days: int = SHORT_FEATURE_DAYS,
    t_max: int = T_MAX,
) -> tuple[np.ndarray, int]:
    """Per-call rows for the window ending at ``as_of``, zero padded to ``t_max``.

    Row layout follows ``DYNAMIC_CHANNELS``; day_offset is 1-based so a row
    for a real call is never all zeros.
    """
    start = as_of - timedelta(days=window_days)
    events = history.window(start, as_of)
    if len(events) > t_max:
        warnings.warn(
            f"{history.beneficiary_id}: {len(events)} calls in window ending {as_of}, keeping last {t_max}",
            TruncatedSequenceWarning,
            stacklevel=2,
        )
        events = events[-t_max:]
    out = np.zeros((t_max, len(DYNAMIC_CHANNELS)))
    for i, ev in enumerate(events):
        out[i] = (
            ev.duration,
            1.0 if ev.connected else 0.0,
            1.0 if ev.engaged else 0.0,
            (ev.date - start).days + 1,
            ev.message_id // MESSAGE_BUCKET_SIZE,
        )
    return out, len(events)


@dataclass
class SequenceFeatures:
    static: np.ndarray
    dynamic: np.ndarray
    valid_len: int
    scalar_calls: np.ndarray
    beneficiary_id: str = ""
    as_of: date | None = None
    meta: dict = field(default_factory=dict)


def featurize(
    history: CallHistory,
    profile: BeneficiaryProfile,
    as_of: date,
    window_days: int,
) -> SequenceFeatures:
    dynamic, valid_len = build_sequence(history, as_of, window_days)
    return SequenceFeatures(
        static=encode_profile(profile),
        dynamic=dynamic,
        valid_len=valid_len,
        scalar_calls=extract_scalar_features(history, as_of, window_days),
        beneficiary_id=history.beneficiary_id,
        as_of=as_of,
    )


# ---------------------------------------------------------------------------
# Labels


def short_term_anchors(history: CallHistory, start: date) -> list[date]:
    """Week-aligned anchors (from ``start``) leaving six weeks of log."""
    if history.end is None:
        return []
    span = SHORT_FEATURE_DAYS + SHORT_LABEL_DAYS
    n = ((history.end - start).days - span) // 7 + 1
    return [start + timedelta(days=7 * w) for w in range(max(n, 0))]


def sample_short_term_anchor(history: CallHistory, start: date, rng: np.random.Generator) -> date:
    anchors = short_term_anchors(history, start)
    if not anchors:
        raise SampleUnavailable(f"{history.beneficiary_id}: fewer than six weeks of log after {start}")
    return anchors[int(rng.integers(len(anchors)))]


def short_term_label(history: CallHistory, label_start: date) -> EngagementLabel:
    _, _, eng = history.counts(label_start, label_start + timedelta(days=SHORT_LABEL_DAYS))
    return EngagementLabel.SHORT_TERM_HIGH_RISK if eng == 0 else EngagementLabel.SHORT_TERM_LOW_RISK


def make_short_term_example(
    history: CallHistory,
    profile: BeneficiaryProfile,
    anchor: date,
) -> tuple[SequenceFeatures, EngagementLabel]:
    """Features from the four weeks after ``anchor``, label from weeks 5-6."""
    as_of = anchor + timedelta(days=SHORT_FEATURE_DAYS)
    if history.end is None or (history.end - anchor).days < SHORT_FEATURE_DAYS + SHORT_LABEL_DAYS:
        raise SampleUnavailable(f"{history.beneficiary_id}: fewer than six weeks of log after {anchor}")
    feats = featurize(history, profile, as_of, SHORT_FEATURE_DAYS)
    return feats, short_term_label(history, as_of)


def make_long_term_example(
    history: CallHistory,
    profile: BeneficiaryProfile | None,
    threshold: float = E2C_THRESHOLD,
    min_connections: int = LONG_MIN_CONNECTIONS,
) -> tuple[SequenceFeatures, EngagementLabel]:
    """First month as features, E2C over the rest of the log as label."""
    if profile is None:
        raise Excluded(f"{history.beneficiary_id}: no valid profile")
    start = profile.registration_date
    if history.end is None or (history.end - start).days < LONG_MIN_SPAN_DAYS:
        raise Excluded(f"{history.beneficiary_id}: fewer than 8 months of log")
    as_of = start + timedelta(days=LONG_FEATURE_DAYS)
    _, conn, eng = history.counts(as_of, history.end)
    if conn < min_connections:
        raise Excluded(f"{history.beneficiary_id}: {conn} connections in prediction period (< {min_connections})")
    label = EngagementLabel.LLTE if eng / conn < threshold else EngagementLabel.HLTE
    return featurize(history, profile, as_of, LONG_FEATURE_DAYS), label
