"""Per-subject prediction records, the batch file format, and content fingerprints.

Batch files are UTF-8, comma-delimited, with a header row::

    patient_id,label,score,subgroup,f_1,...,f_K

Parsing is strict: every row must have exactly as many fields as the header.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyDatasetError, SchemaError

BASE_COLUMNS = ("patient_id", "label", "score", "subgroup")


@dataclass(frozen=True)
class PredictionRecord:
    patient_id: str
    label: int
    score: float
    features: tuple[float, ...] = ()
    subgroup: str = ""
    site: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not self.patient_id:
            raise SchemaError("patient_id must be non-empty")
        if self.label not in (0, 1):
            raise SchemaError(f"label must be 0 or 1, got {self.label!r}")
        if not (0.0 <= self.score <= 1.0) or math.isnan(self.score):
            raise SchemaError(f"score must lie in [0, 1], got {self.score!r}")

    def with_score(self, score: float) -> "PredictionRecord":
        return replace(self, score=score)


def as_arrays(records: Sequence[PredictionRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, scores)`` as numpy arrays."""
    if len(records) == 0:
        raise EmptyDatasetError("no records supplied")
    labels = np.fromiter((r.label for r in records), dtype=np.int8, count=len(records))
    scores = np.fromiter((r.score for r in records), dtype=float, count=len(records))
    return labels, scores


def feature_matrix(records: Sequence[PredictionRecord], columns: Sequence[int] | None = None) -> np.ndarray:
    if len(records) == 0:
        raise EmptyDatasetError("no records supplied")
    widths = {len(r.features) for r in records}
    if len(widths) != 1:
        raise SchemaError(f"records carry inconsistent feature counts: {sorted(widths)}")
    mat = np.asarray([r.features for r in records], dtype=float)
    if columns is not None:
        mat = mat[:, list(columns)]
    return mat


def _hash_lines(lines: Iterable[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def scored_fingerprint(records: Iterable[PredictionRecord]) -> str:
    """Order-independent hash of the (patient_id, label, score) triples."""
    return _hash_lines(sorted(f"{r.patient_id}\t{r.label}\t{r.score!r}" for r in records))


def content_fingerprint(records: Iterable[PredictionRecord]) -> str:
    """Order-independent hash of the full record content, features included."""
    return _hash_lines(
        sorted(
            "\t".join([r.patient_id, str(r.label), repr(r.score), r.subgroup, *map(repr, r.features)])
            for r in records
        )
    )


def id_fingerprint(patient_ids: Iterable[str]) -> str:
    return _hash_lines(sorted(patient_ids))


# -- delimited batch format -------------------------------------------------

def batch_header(k_features: int) -> list[str]:
    return [*BASE_COLUMNS, *(f"f_{i}" for i in range(1, k_features + 1))]


def write_batch(records: Sequence[PredictionRecord], path: str | Path | io.TextIOBase) -> None:
    k = len(records[0].features) if records else 0
    own = isinstance(path, (str, Path))
    fh = open(path, "w", encoding="utf-8", newline="") if own else path
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(batch_header(k))
        for r in records:
            writer.writerow([r.patient_id, r.label, repr(r.score), r.subgroup, *map(repr, r.features)])
    finally:
        if own:
            fh.close()


def read_batch(path: str | Path | io.TextIOBase) -> list[PredictionRecord]:
    own = isinstance(path, (str, Path))
    fh = open(path, encoding="utf-8", newline="") if own else path
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("batch file is empty (no header row)") from None
        if tuple(header[:4]) != BASE_COLUMNS:
            raise SchemaError(f"header must start with {','.join(BASE_COLUMNS)}, got {','.join(header[:4])}")
        feature_cols = header[4:]
        expected = [f"f_{i}" for i in range(1, len(feature_cols) + 1)]
        if feature_cols != expected:
            raise SchemaError(f"feature columns must be f_1..f_K in order, got {feature_cols}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                label = int(row[1])
                score = float(row[2])
                feats = tuple(float(x) for x in row[4:])
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            out.append(PredictionRecord(row[0], label, score, feats, row[3]))
        return out
    finally:
        if own:
            fh.close()
