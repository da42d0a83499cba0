from datetime import date, timedelta

import pytest

from engageplan.calllog import BeneficiaryProfile, CallEvent, CallHistory, CallRecord, EventKind

D0 = date(2020, 1, 1)


def day(n: int) -> date:
    return D0 + timedelta(days=n)


def ev(d: int, kind: str, duration: float | None = None, message_id: int = 0) -> CallEvent:
    k = {"A": EventKind.ATTEMPT, "C": EventKind.CONNECTION, "E": EventKind.ENGAGEMENT}[kind]
    if duration is None:
        duration = {"A": 0.0, "C": 10.0, "E": 60.0}[kind]
    return CallEvent(k, day(d), duration, message_id)


def history(spec: str | list, end: int | None = None, bid: str = "b1") -> CallHistory:
    """``"1A 3C 5E"`` -> history with those events."""
    if isinstance(spec, str):
        spec = [(int(tok[:-1]), tok[-1]) for tok in spec.split()]
    events = tuple(ev(d, k) for d, k in spec)
    return CallHistory(bid, events, day(end) if end is not None else None)


def rec(bid="b1", d=0, duration=0.0, success=False, group="g1", message_id=1) -> CallRecord:
    return CallRecord(bid, day(d), message_id, duration, success, group)


@pytest.fixture
def profile():
    return BeneficiaryProfile(
        beneficiary_id="b1",
        age=24,
        education_level=3,
        income_group=2,
        phone_owner="woman",
        registration_date=D0,
        gestation_age=20,
        language="hindi",
        call_slot="2",
    )
