"""CSV readers/writers for beneficiaries, calls and interventions, plus the
JSON array container used for models and feature sets.

Readers skip ``#`` provenance lines.  A malformed row is skipped with a
line-numbered warning, or raises :class:`DataFileError` when ``strict``.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
import logging
import warnings
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .calllog import BeneficiaryProfile, CallRecord, CallLogError

log = logging.getLogger(__name__)

BENEFICIARY_COLUMNS = (
    "beneficiary_id",
    "age",
    "education_level",
    "income_group",
    "phone_owner",
    "registration_date",
    "gestation_age",
    "language",
    "call_slot",
)
CALL_COLUMNS = ("beneficiary_id", "attempt_group", "call_date", "message_id", "duration_seconds", "success")
INTERVENTION_COLUMNS = ("beneficiary_id", "date", "kind", "success")
INTERVENTION_KINDS = ("SMS", "CALL")


class DataFileError(ValueError):
    pass


class MalformedRowWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Intervention:
    beneficiary_id: str
    date: date
    kind: str
    success: bool


# ---------------------------------------------------------------------------
# provenance


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(config: dict, seed: int | None) -> dict:
    return {"tool": "engageplan", "version": __version__, "config_hash": config_hash(config), "seed": seed}


def provenance_lines(prov: dict | None) -> str:
    if not prov:
        return ""
    return "".join(f"# {k}={prov[k]}\n" for k in sorted(prov))


# ---------------------------------------------------------------------------
# parsing helpers


def _bool01(s: str) -> bool:
    if s not in ("0", "1"):
        raise ValueError(f"expected 0/1, got {s!r}")
    return s == "1"


def _read_rows(path: Path | str, columns: tuple[str, ...], parse: Callable[[dict], Any], strict: bool) -> list:
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.startswith("#")]
    if not body:
        raise DataFileError(f"{path}: no header")
    header_line, header = body[0]
    names = next(csv.reader([header]))
    missing = [c for c in columns if c not in names]
    if missing:
        raise DataFileError(f"{path}:{header_line}: missing columns {missing}")
    out = []
    for lineno, ln in body[1:]:
        values = next(csv.reader([ln]))
        try:
            if len(values) != len(names):
                raise ValueError(f"expected {len(names)} fields, got {len(values)}")
            out.append(parse(dict(zip(names, values))))
        except (ValueError, CallLogError) as exc:
            msg = f"{path}:{lineno}: rejected row: {exc}"
            if strict:
                raise DataFileError(msg) from exc
            warnings.warn(msg, MalformedRowWarning, stacklevel=3)
    return out


def _parse_beneficiary(row: dict) -> BeneficiaryProfile:
    for c in BENEFICIARY_COLUMNS:
        if row[c].strip() == "":
            raise ValueError(f"empty field {c}")
    return BeneficiaryProfile(
        beneficiary_id=row["beneficiary_id"],
        age=int(row["age"]),
        education_level=int(row["education_level"]),
        income_group=int(row["income_group"]),
        phone_owner=row["phone_owner"],
        registration_date=date.fromisoformat(row["registration_date"]),
        gestation_age=int(row["gestation_age"]),
        language=row["language"],
        call_slot=row["call_slot"],
    )


def _parse_call(row: dict) -> CallRecord:
    duration = float(row["duration_seconds"])
    if not duration >= 0:
        raise ValueError(f"negative duration {duration}")
    if not row["beneficiary_id"] or not row["attempt_group"]:
        raise ValueError("empty id")
    return CallRecord(
        beneficiary_id=row["beneficiary_id"],
        call_date=date.fromisoformat(row["call_date"]),
        message_id=int(row["message_id"]),
        duration=duration,
        success=_bool01(row["success"]),
        attempt_group=row["attempt_group"],
    )


def _parse_intervention(row: dict) -> Intervention:
    if row["kind"] not in INTERVENTION_KINDS:
        raise ValueError(f"kind {row['kind']!r} not in {INTERVENTION_KINDS}")
    return Intervention(row["beneficiary_id"], date.fromisoformat(row["date"]), row["kind"], _bool01(row["success"]))


def read_beneficiaries(path, strict: bool = False) -> list[BeneficiaryProfile]:
    return _read_rows(path, BENEFICIARY_COLUMNS, _parse_beneficiary, strict)


def read_calls(path, strict: bool = False) -> list[CallRecord]:
    return _read_rows(path, CALL_COLUMNS, _parse_call, strict)


def read_interventions(path, strict: bool = False) -> list[Intervention]:
    return _read_rows(path, INTERVENTION_COLUMNS, _parse_intervention, strict)


# ---------------------------------------------------------------------------
# writing


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(round(v, 6)) if not v.is_integer() else str(int(v))
    if isinstance(v, date):
        return v.isoformat()
    return str(v)


def write_csv(path, columns: Iterable[str], rows: Iterable[Iterable], prov: dict | None = None) -> None:
    buf = io.StringIO()
    buf.write(provenance_lines(prov))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns))
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def write_beneficiaries(path, profiles: Iterable[BeneficiaryProfile], prov: dict | None = None) -> None:
    write_csv(path, BENEFICIARY_COLUMNS, ([getattr(p, c) for c in BENEFICIARY_COLUMNS] for p in profiles), prov)


def write_calls(path, records: Iterable[CallRecord], prov: dict | None = None) -> None:
    rows = (
        (r.beneficiary_id, r.attempt_group, r.call_date, r.message_id, float(r.duration), r.success) for r in records
    )
    write_csv(path, CALL_COLUMNS, rows, prov)


def write_interventions(path, items: Iterable[Intervention], prov: dict | None = None) -> None:
    write_csv(path, INTERVENTION_COLUMNS, ((i.beneficiary_id, i.date, i.kind, i.success) for i in items), prov)


def write_json(path, obj: dict, prov: dict | None = None) -> None:
    if prov is not None:
        obj = {"provenance": prov, **obj}
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, date):
        return o.isoformat()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# array container: JSON with base64 raw buffers, bit-exact round trip

CONTAINER_FORMAT = "engageplan-arrays"
CONTAINER_VERSION = 1


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {"dtype": a.dtype.str, "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def save_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray], prov: dict | None = None) -> None:
    obj = {
        "format": CONTAINER_FORMAT,
        "version": CONTAINER_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": {k: encode_array(v) for k, v in sorted(arrays.items())},
    }
    write_json(path, obj, prov)


def load_container(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != CONTAINER_FORMAT:
        raise DataFileError(f"{path}: not an {CONTAINER_FORMAT} file")
    if obj.get("version") != CONTAINER_VERSION:
        raise DataFileError(f"{path}: unsupported container version {obj.get('version')}")
    if kind is not None and obj.get("kind") != kind:
        raise DataFileError(f"{path}: expected kind {kind!r}, found {obj.get('kind')!r}")
    meta = dict(obj["meta"])
    meta["kind"] = obj["kind"]
    return meta, {k: decode_array(v) for k, v in obj["arrays"].items()}
