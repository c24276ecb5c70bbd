"""Append-only, hash-chained JSONL audit log and plot-ready metric export.

Each line is one JSON object with keys serialised in sorted order and no
insignificant whitespace::

    {"config_hash": ..., "entry_hash": ..., "entry_kind": ..., "payload": {...},
     "prev_entry_hash": ..., "schema_version": 1, "timestamp": ...}

``entry_hash`` is the SHA-256 of the same object serialised without the
``entry_hash`` key. The first entry chains to :data:`GENESIS`.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import itertools
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

from .cdm.model import DecisionRecord, ReferenceState
from .errors import IntegrityError

SCHEMA_VERSION = 1
GENESIS = "0" * 64


class EntryKind(str, enum.Enum):
    BATCH_REGISTERED = "BATCH_REGISTERED"
    SNAPSHOT = "SNAPSHOT"
    DRIFT_REPORT = "DRIFT_REPORT"
    DECISION = "DECISION"
    REFERENCE_UPDATE = "REFERENCE_UPDATE"


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _digest(body: Mapping[str, Any]) -> str:
    return hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AuditEntry:
    schema_version: int
    timestamp: str
    entry_kind: EntryKind
    payload: Mapping[str, Any]
    config_hash: str
    prev_entry_hash: str
    entry_hash: str = ""

    def body(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "timestamp": self.timestamp,
            "entry_kind": self.entry_kind.value,
            "payload": self.payload,
            "config_hash": self.config_hash,
            "prev_entry_hash": self.prev_entry_hash,
        }

    def compute_hash(self) -> str:
        return _digest(self.body())

    def to_line(self) -> str:
        return _canonical({**self.body(), "entry_hash": self.entry_hash})

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AuditEntry":
        return cls(
            schema_version=d["schema_version"],
            timestamp=d["timestamp"],
            entry_kind=EntryKind(d["entry_kind"]),
            payload=d["payload"],
            config_hash=d["config_hash"],
            prev_entry_hash=d["prev_entry_hash"],
            entry_hash=d["entry_hash"],
        )


class LogicalClock:
    """Deterministic timestamps (a counter), so reruns give byte-identical logs."""

    def __init__(self, start: int = 0) -> None:
        self._counter = itertools.count(start)

    def __call__(self) -> str:
        return f"logical:{next(self._counter):08d}"


def wall_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    n_entries: int
    bad_line: int | None = None
    message: str = ""


def _check_line(raw: bytes, line_no: int, prev: str) -> AuditEntry:
    try:
        text = raw.decode("utf-8")
        d = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unparseable entry: {exc}", line_no) from None
    if not isinstance(d, dict) or "schema_version" not in d:
        raise IntegrityError("entry lacks schema_version", line_no)
    try:
        entry = AuditEntry.from_dict(d)
    except (KeyError, ValueError, TypeError) as exc:
        raise IntegrityError(f"malformed entry: {exc}", line_no) from None
    if set(d) != set(entry.body()) | {"entry_hash"}:
        raise IntegrityError("unexpected fields in entry", line_no)
    if entry.to_line() != text:
        raise IntegrityError("entry is not in canonical form", line_no)
    if entry.prev_entry_hash != prev:
        raise IntegrityError("chain broken: prev_entry_hash does not match predecessor", line_no)
    if entry.compute_hash() != entry.entry_hash:
        raise IntegrityError("entry hash mismatch", line_no)
    return entry


def iter_entries(path: str | Path) -> Iterator[AuditEntry]:
    """Yield verified entries; raises IntegrityError at the first bad line (1-based)."""
    prev = GENESIS
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.endswith(b"\n"):
                raise IntegrityError("truncated final entry", line_no)
            entry = _check_line(raw[:-1], line_no, prev)
            prev = entry.entry_hash
            yield entry


def verify_log(path: str | Path) -> VerifyResult:
    """Single pass over the file; O(n) in entries."""
    n = 0
    try:
        for _ in iter_entries(path):
            n += 1
    except IntegrityError as exc:
        return VerifyResult(False, n, exc.line_number, exc.message)
    except OSError as exc:
        return VerifyResult(False, 0, None, str(exc))
    return VerifyResult(True, n)


class AuditLog:
    """Single-writer append handle. Opening an existing file verifies it first."""

    def __init__(self, path: str | Path, clock: Callable[[], str] | None = None) -> None:
        self.path = Path(path)
        self._head = GENESIS
        n = 0
        if self.path.exists():
            for entry in iter_entries(self.path):
                self._head = entry.entry_hash
                n += 1
        self._n = n
        self._clock = clock if clock is not None else LogicalClock(n)

    @property
    def head(self) -> str:
        return self._head

    def __len__(self) -> int:
        return self._n

    def append(self, kind: EntryKind | str, payload: Mapping[str, Any], config_hash: str = "") -> str:
        """Durably append one entry (flush + fsync) and return its hash."""
        entry = AuditEntry(SCHEMA_VERSION, self._clock(), EntryKind(kind), json.loads(_canonical(payload)),
                           config_hash, self._head)
        entry = AuditEntry(**{**entry.__dict__, "entry_hash": entry.compute_hash()})
        line = (entry.to_line() + "\n").encode("utf-8")
        try:
            with open(self.path, "ab") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise IntegrityError(f"audit append failed: {exc}") from exc
        self._head = entry.entry_hash
        self._n += 1
        return entry.entry_hash

    def decision_sink(self, config_hash: str) -> Callable[[DecisionRecord], str]:
        return lambda record: self.append(EntryKind.DECISION, record.to_dict(), config_hash)

    def entries(self) -> list[AuditEntry]:
        return list(iter_entries(self.path)) if self.path.exists() else []


def decisions(path: str | Path) -> list[DecisionRecord]:
    return [DecisionRecord.from_dict(e.payload) for e in iter_entries(path) if e.entry_kind is EntryKind.DECISION]


def reference_states(path: str | Path) -> list[ReferenceState]:
    """The reference state after every REFERENCE_UPDATE entry, in log order."""
    return [
        ReferenceState.from_dict(e.payload["references"])
        for e in iter_entries(path)
        if e.entry_kind is EntryKind.REFERENCE_UPDATE
    ]


# Table-style columns first, then the rest of the snapshot.
EXPORT_COLUMNS = (
    "iteration",
    "n_training",
    "sensitivity",
    "specificity",
    "roc_auc",
    "mlcps",
    "drift_score",
    "drift_band",
    "trigger",
    "routing_trace",
    "deployment_decision",
    "pms_signal",
    "alarm_triggers",
    "ppv",
    "npv",
    "fnr",
    "fpr",
    "accuracy",
    "balanced_accuracy",
    "f1",
    "mcc",
    "kappa",
    "brier",
    "pr_auc",
    "operating_threshold",
    "n_records",
    "confidence",
    "golden_fingerprint",
    "drifting_fingerprint",
)

_SNAPSHOT_COLUMNS = {
    "sensitivity", "specificity", "roc_auc", "mlcps", "ppv", "npv", "fnr", "fpr", "accuracy",
    "balanced_accuracy", "f1", "mcc", "kappa", "brier", "pr_auc", "operating_threshold", "n_records",
}


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export_row(record: DecisionRecord) -> dict[str, str]:
    art = record.logged_artifacts
    snap = art.get("candidate_golden") or {}
    drift = art.get("drift") or {}
    fps = art.get("dataset_fingerprints") or {}
    row: dict[str, Any] = {c: None for c in EXPORT_COLUMNS}
    for c in _SNAPSHOT_COLUMNS:
        row[c] = snap.get(c)
    row.update(
        iteration=record.iteration,
        n_training=art.get("n_training"),
        drift_score=drift.get("drift_score"),
        drift_band=drift.get("band"),
        trigger="; ".join(record.trigger_reasons),
        routing_trace=record.trace_text,
        deployment_decision=record.deployment_decision.value,
        pms_signal="ALARM" if record.alarm else "",
        alarm_triggers="|".join(record.alarm_triggers),
        confidence=record.confidence,
        golden_fingerprint=fps.get("golden"),
        drifting_fingerprint=fps.get("drifting"),
    )
    return {k: _cell(v) for k, v in row.items()}


def write_rows(rows: Sequence[Mapping[str, str]], out_path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=EXPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c, "") for c in EXPORT_COLUMNS})
    Path(out_path).write_text(buf.getvalue(), encoding="utf-8")


def read_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != EXPORT_COLUMNS:
            raise IntegrityError(f"{path}: unexpected export header")
        return [dict(r) for r in reader]


def export_metrics(log_path: str | Path, out_path: str | Path) -> int:
    """One CSV row per DECISION entry; returns the number of rows written."""
    rows = [export_row(r) for r in decisions(log_path)]
    write_rows(rows, out_path)
    return len(rows)
