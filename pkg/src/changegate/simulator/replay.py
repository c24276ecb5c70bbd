"""Feed tabulated metric rows through the decision engine.

Replay files are UTF-8 CSV with one row per iteration. Column conventions:

* ``iteration`` (required) and ``n_training`` (optional, logged only);
* plain metric names (``sensitivity``, ``dsc`` ...) are the candidate on the golden set;
* ``incoming_<metric>`` is the candidate on the incoming batch;
* ``released_<metric>`` is the released model on the incoming batch;
* ``drift_score`` is the aggregate drift score;
* ``expected_*`` columns are reference annotations and are ignored.

Empty cells mean "not reported".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..audit import AuditLog, EntryKind
from ..categories import RuleProfile
from ..cdm.engine import decide, initial_references
from ..cdm.model import DecisionRecord
from ..config import GovernanceConfig
from ..drift import DriftReport
from ..errors import SchemaError
from ..metrics import MetricSnapshot, snapshot_from_values

TABLES = ("table6_sepsis", "table8_segmentation")


@dataclass(frozen=True)
class ReplayRow:
    iteration: int
    golden: Mapping[str, float]
    incoming: Mapping[str, float] = field(default_factory=dict)
    released: Mapping[str, float] = field(default_factory=dict)
    drift_score: float | None = None
    n_training: int | None = None
    expected: Mapping[str, str] = field(default_factory=dict)


def table_path(name: str) -> Path:
    if name not in TABLES:
        raise SchemaError(f"unknown table {name!r}; choose from {', '.join(TABLES)}")
    return Path(str(resources.files("changegate") / "data" / f"{name}.csv"))


def _num(value: str, column: str, line: int) -> float | None:
    value = value.strip()
    if not value:
        return None
    try:
        return float(value)
    except ValueError:
        raise SchemaError(f"line {line}: column {column!r} is not numeric: {value!r}") from None


def load_rows(path: str | Path) -> list[ReplayRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, strict=True)
        if not reader.fieldnames or "iteration" not in reader.fieldnames:
            raise SchemaError(f"{path}: header must include 'iteration'")
        rows = []
        for line, raw in enumerate(reader, start=2):
            if None in raw or any(v is None for v in raw.values()):
                raise SchemaError(f"{path} line {line}: row arity does not match header")
            golden: dict[str, float] = {}
            incoming: dict[str, float] = {}
            released: dict[str, float] = {}
            expected: dict[str, str] = {}
            drift = n_train = None
            for col, val in raw.items():
                if col == "iteration":
                    continue
                if col.startswith("expected_"):
                    expected[col[len("expected_"):]] = val
                    continue
                x = _num(val, col, line)
                if col == "drift_score":
                    drift = x
                elif col == "n_training":
                    n_train = None if x is None else int(x)
                elif x is None:
                    continue
                elif col.startswith("incoming_"):
                    incoming[col[len("incoming_"):]] = x
                elif col.startswith("released_"):
                    released[col[len("released_"):]] = x
                else:
                    golden[col] = x
            it = _num(raw["iteration"], "iteration", line)
            if it is None:
                raise SchemaError(f"{path} line {line}: iteration is empty")
            rows.append(ReplayRow(int(it), golden, incoming, released, drift, n_train, expected))
    return rows


def _required(cfg: GovernanceConfig) -> set[str]:
    if cfg.rule_profile is RuleProfile.SEGMENTATION_STYLE:
        return {cfg.primary_metric}
    derived = {"fnr": "sensitivity", "fpr": "specificity"}
    names = set(cfg.p_fail) | set(cfg.buffer_zone) | set(cfg.ref_tolerance) | set(cfg.safety_ceilings)
    return {derived.get(n, n) for n in names}


def _snap(values: Mapping[str, float], cfg: GovernanceConfig, tag: str) -> MetricSnapshot:
    return snapshot_from_values(values, cfg.mlcps_weights, fingerprint=tag)


def replay_table(
    rows: Sequence[ReplayRow],
    cfg: GovernanceConfig,
    audit: AuditLog | str | Path | None = None,
) -> list[DecisionRecord]:
    """Decisions from tabulated values alone; no resampling, no data."""
    if isinstance(audit, (str, Path)):
        audit = AuditLog(audit)
    chash = cfg.config_hash()
    sink = audit.decision_sink(chash) if audit is not None else None
    need = _required(cfg)
    refs = initial_references(cfg)
    out = []
    for row in rows:
        missing = sorted(m for m in need if m not in row.golden)
        if missing:
            raise SchemaError(f"iteration {row.iteration}: missing required metric(s) {missing}")
        if cfg.drift_enabled and row.drift_score is None:
            raise SchemaError(f"iteration {row.iteration}: missing drift_score")

        golden = _snap(row.golden, cfg, f"table:{row.iteration}:golden")
        incoming = _snap(row.incoming, cfg, f"table:{row.iteration}:incoming") if row.incoming else None
        if cfg.rule_profile is RuleProfile.SEGMENTATION_STYLE:
            # The segmentation alarm tracks the candidate's own score on the incoming batch.
            released = incoming
        else:
            released = _snap(row.released, cfg, f"table:{row.iteration}:released") if row.released else None
        drift = None
        if cfg.drift_enabled:
            drift = DriftReport.from_score(row.drift_score, cfg.drift_bands, alpha=cfg.alpha)

        extra: dict[str, Any] = {"n_training": row.n_training, "source": "table replay"}
        if audit is not None:
            payload = {
                "iteration": row.iteration,
                "candidate_golden": golden.to_dict(),
                "candidate_drift": None if incoming is None else incoming.to_dict(),
                "released_on_drift": None if released is None else released.to_dict(),
            }
            audit.append(EntryKind.SNAPSHOT, payload, chash)
            if drift is not None:
                audit.append(EntryKind.DRIFT_REPORT, {"iteration": row.iteration, "drift": drift.to_dict()}, chash)
        record, refs = decide(
            row.iteration, cfg, refs, golden, incoming, released, drift, sink=sink, extra_artifacts=extra
        )
        if audit is not None:
            audit.append(EntryKind.REFERENCE_UPDATE, {"iteration": row.iteration, "references": refs.to_dict()}, chash)
        out.append(record)
    return out
