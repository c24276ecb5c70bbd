from __future__ import annotations

import json

import pytest

from changegate.audit import (
    EXPORT_COLUMNS,
    GENESIS,
    AuditLog,
    EntryKind,
    LogicalClock,
    decisions,
    export_metrics,
    iter_entries,
    read_rows,
    reference_states,
    verify_log,
    write_rows,
)
from changegate.cdm.engine import decide, initial_references
from changegate.drift import DriftReport
from changegate.errors import IntegrityError
from changegate.metrics import snapshot_from_values
from changegate.simulator import load_rows, replay_table, table_path

import properties


@pytest.fixture
def table6_log(tmp_path, sepsis_cfg):
    path = tmp_path / "t6.jsonl"
    records = replay_table(load_rows(table_path("table6_sepsis")), sepsis_cfg, path)
    return path, records


def test_append_builds_a_chain(tmp_path):
    log = AuditLog(tmp_path / "a.jsonl")
    h1 = log.append(EntryKind.SNAPSHOT, {"x": 1})
    h2 = log.append("DRIFT_REPORT", {"y": [1, 2]}, "cfg")
    entries = log.entries()
    assert [e.entry_hash for e in entries] == [h1, h2]
    assert entries[0].prev_entry_hash == GENESIS and entries[1].prev_entry_hash == h1
    assert entries[1].config_hash == "cfg"
    assert all(e.schema_version == 1 for e in entries)
    assert verify_log(log.path).ok


def test_reopening_continues_the_chain(tmp_path):
    path = tmp_path / "a.jsonl"
    AuditLog(path).append(EntryKind.SNAPSHOT, {"i": 0})
    log = AuditLog(path)
    assert len(log) == 1
    log.append(EntryKind.SNAPSHOT, {"i": 1})
    res = verify_log(path)
    assert res.ok and res.n_entries == 2
    assert [e.timestamp for e in iter_entries(path)] == ["logical:00000000", "logical:00000001"]


def test_opening_a_tampered_log_refuses_to_append(tmp_path):
    path = tmp_path / "a.jsonl"
    AuditLog(path).append(EntryKind.SNAPSHOT, {"v": 1})
    path.write_text(path.read_text(encoding="utf-8").replace('"v":1', '"v":2'), encoding="utf-8")
    with pytest.raises(IntegrityError):
        AuditLog(path)


def test_reordered_entries_are_detected(tmp_path):
    path = tmp_path / "a.jsonl"
    log = AuditLog(path)
    for i in range(3):
        log.append(EntryKind.SNAPSHOT, {"i": i})
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    path.write_text(lines[0] + lines[2] + lines[1], encoding="utf-8")
    res = verify_log(path)
    assert not res.ok and res.bad_line == 2 and "chain" in res.message


def test_truncated_and_non_canonical_entries(tmp_path):
    path = tmp_path / "a.jsonl"
    AuditLog(path).append(EntryKind.SNAPSHOT, {"i": 0})
    text = path.read_text(encoding="utf-8")
    path.write_text(text.rstrip("\n"), encoding="utf-8")
    assert verify_log(path).message == "truncated final entry"
    d = json.loads(text)
    path.write_text(json.dumps(d, indent=1).replace("\n", " ") + "\n", encoding="utf-8")
    assert "canonical" in verify_log(path).message
    path.write_text(json.dumps({**d, "extra": 1}, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    assert not verify_log(path).ok


def test_write_failure_is_a_hard_error(tmp_path):
    log = AuditLog(tmp_path / "missing-dir" / "a.jsonl")
    with pytest.raises(IntegrityError):
        log.append(EntryKind.SNAPSHOT, {})


def test_logical_clock():
    clock = LogicalClock(5)
    assert clock() == "logical:00000005" and clock() == "logical:00000006"


def test_single_bit_flips_are_detected(table6_log, tmp_path):
    path, _ = table6_log
    assert properties.check_single_bit_tamper(path, 300, seed=1, tmp=tmp_path) == 300


def test_log_replay_reconstructs_reference_states(tmp_path, sepsis_cfg):
    rows = load_rows(table_path("table6_sepsis"))
    path = tmp_path / "r.jsonl"
    replay_table(rows, sepsis_cfg, path)
    expected = []
    refs = initial_references(sepsis_cfg)
    for row in rows:
        g = snapshot_from_values(row.golden, sepsis_cfg.mlcps_weights, f"table:{row.iteration}:golden")
        d = DriftReport.from_score(row.drift_score, sepsis_cfg.drift_bands, alpha=sepsis_cfg.alpha)
        _, refs = decide(row.iteration, sepsis_cfg, refs, g, None, None, d)
        expected.append(refs)
    assert reference_states(path) == expected


def test_decision_entries_match_export_rows(table6_log, tmp_path):
    path, records = table6_log
    out = tmp_path / "t6.csv"
    assert export_metrics(path, out) == len(records) == 11
    rows = read_rows(out)
    logged = decisions(path)
    assert [int(r["iteration"]) for r in rows] == [d.iteration for d in logged]
    assert [r["deployment_decision"] for r in rows] == [d.deployment_decision.value for d in logged]
    assert [d.to_dict() for d in logged] == [r.to_dict() for r in records]


def test_export_reproduces_table_columns(table6_log, tmp_path):
    path, _ = table6_log
    out = tmp_path / "t6.csv"
    export_metrics(path, out)
    rows = read_rows(out)
    for table_row, exported in zip(load_rows(table_path("table6_sepsis")), rows):
        assert int(exported["n_training"]) == table_row.n_training
        for col in ("sensitivity", "specificity", "roc_auc", "mlcps"):
            assert float(exported[col]) == table_row.golden[col]
        assert float(exported["drift_score"]) == table_row.drift_score


def test_empty_log_exports_header_only(tmp_path):
    log = tmp_path / "empty.jsonl"
    log.write_bytes(b"")
    out = tmp_path / "empty.csv"
    assert export_metrics(log, out) == 0
    assert out.read_text(encoding="utf-8") == ",".join(EXPORT_COLUMNS) + "\n"


def test_export_round_trip_is_idempotent(table6_log, tmp_path):
    path, _ = table6_log
    first, second = tmp_path / "1.csv", tmp_path / "2.csv"
    export_metrics(path, first)
    write_rows(read_rows(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_read_rows_checks_header(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(IntegrityError):
        read_rows(bad)
