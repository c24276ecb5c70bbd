"""Dataset assimilation bookkeeping: batch provenance, patient-safe splits, accumulation."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .errors import ConflictError, ContaminationError, DomainError, EmptyDatasetError
from .records import PredictionRecord, content_fingerprint, id_fingerprint


@dataclass(frozen=True)
class BatchManifest:
    batch_id: str
    source: str
    collection_window: tuple[str, str]
    labelling_method: str
    reviewer_ids: tuple[str, ...]
    ingest_timestamp: str
    n_records: int
    quarantined: tuple[str, ...] = ()

    def provenance(self) -> tuple:
        return (self.source, self.collection_window, self.labelling_method, self.reviewer_ids)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["collection_window"] = list(self.collection_window)
        d["reviewer_ids"] = list(self.reviewer_ids)
        d["quarantined"] = list(self.quarantined)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BatchManifest":
        return cls(
            batch_id=d["batch_id"],
            source=d["source"],
            collection_window=tuple(d["collection_window"]),
            labelling_method=d["labelling_method"],
            reviewer_ids=tuple(d["reviewer_ids"]),
            ingest_timestamp=d["ingest_timestamp"],
            n_records=int(d["n_records"]),
            quarantined=tuple(d.get("quarantined", ())),
        )


class BatchRegistry:
    """Content-addressed store of registered batch manifests."""

    def __init__(self) -> None:
        self._manifests: dict[str, BatchManifest] = {}

    def __contains__(self, batch_id: str) -> bool:
        return batch_id in self._manifests

    def __getitem__(self, batch_id: str) -> BatchManifest:
        return self._manifests[batch_id]

    def __len__(self) -> int:
        return len(self._manifests)

    def register(
        self,
        records: Sequence[PredictionRecord],
        *,
        source: str,
        collection_window: tuple[str, str],
        labelling_method: str,
        reviewer_ids: Sequence[str],
        ingest_timestamp: str,
        quarantined: Iterable[str] = (),
    ) -> BatchManifest:
        if not records:
            raise EmptyDatasetError("cannot register an empty batch")
        if not source or not labelling_method:
            raise DomainError("source and labelling_method are required provenance fields")
        manifest = BatchManifest(
            batch_id=content_fingerprint(records),
            source=source,
            collection_window=(str(collection_window[0]), str(collection_window[1])),
            labelling_method=labelling_method,
            reviewer_ids=tuple(reviewer_ids),
            ingest_timestamp=ingest_timestamp,
            n_records=len(records),
            quarantined=tuple(sorted(set(quarantined))),
        )
        existing = self._manifests.get(manifest.batch_id)
        if existing is not None:
            if existing.provenance() != manifest.provenance():
                raise ConflictError(f"batch {manifest.batch_id[:12]} already registered with different provenance")
            return existing
        self._manifests[manifest.batch_id] = manifest
        return manifest

    def restore(self, manifest: BatchManifest) -> None:
        """Re-load a manifest read back from the audit log."""
        existing = self._manifests.get(manifest.batch_id)
        if existing is not None and existing.provenance() != manifest.provenance():
            raise ConflictError(f"batch {manifest.batch_id[:12]} appears twice with different provenance")
        self._manifests.setdefault(manifest.batch_id, manifest)

    def release(self, batch_id: str, patient_ids: Iterable[str]) -> BatchManifest:
        """Clear quarantine flags once the records have been resolved."""
        manifest = self._manifests[batch_id]
        ids = set(patient_ids)
        unknown = ids - set(manifest.quarantined)
        if unknown:
            raise DomainError(f"{len(unknown)} patient(s) are not quarantined in batch {batch_id[:12]}")
        remaining = tuple(p for p in manifest.quarantined if p not in ids)
        manifest = replace(manifest, quarantined=remaining)
        self._manifests[batch_id] = manifest
        return manifest


def admissible(records: Sequence[PredictionRecord], manifest: BatchManifest) -> list[PredictionRecord]:
    """Records that may enter a split: everything not currently quarantined."""
    held = set(manifest.quarantined)
    return [r for r in records if r.patient_id not in held]


def keyed_unit(seed: int, purpose: str, patient_id: str) -> float:
    key = f"{seed}:{purpose}".encode()
    digest = hmac.new(key, patient_id.encode("utf-8"), hashlib.sha256).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass(frozen=True)
class SplitLedger:
    golden: frozenset[str]
    training: frozenset[str]
    drifting: frozenset[str] = frozenset()
    reserve: frozenset[str] = frozenset()
    iteration: int = 0
    golden_fingerprint: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        sets = {"golden": self.golden, "training": self.training, "drifting": self.drifting, "reserve": self.reserve}
        names = list(sets)
        for i, x in enumerate(names):
            for y in names[i + 1 :]:
                overlap = sets[x] & sets[y]
                if overlap:
                    if "golden" in (x, y):
                        raise ContaminationError(
                            f"{len(overlap)} golden patient(s) found in {y if x == 'golden' else x}"
                        )
                    raise DomainError(f"{len(overlap)} patient(s) in both {x} and {y}")
        if not self.golden_fingerprint:
            object.__setattr__(self, "golden_fingerprint", id_fingerprint(self.golden))

    def split_of(self, patient_id: str) -> str | None:
        for name in ("golden", "training", "drifting", "reserve"):
            if patient_id in getattr(self, name):
                return name
        return None

    def with_drifting(self, patient_ids: Iterable[str]) -> "SplitLedger":
        """Register the incoming batch's patients as the drifting set for this iteration."""
        ids = frozenset(patient_ids)
        leaked = ids & self.golden
        if leaked:
            raise ContaminationError(f"{len(leaked)} golden patient(s) in the incoming batch")
        return replace(self, drifting=self.drifting | ids, reserve=self.reserve - ids)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "golden_fingerprint": self.golden_fingerprint,
            "training_fingerprint": id_fingerprint(self.training),
            "drifting_fingerprint": id_fingerprint(self.drifting),
            "n_golden": len(self.golden),
            "n_training": len(self.training),
            "n_drifting": len(self.drifting),
            "n_reserve": len(self.reserve),
        }


def assign_splits(
    patient_ids: Iterable[str],
    golden_fraction: float,
    seed: int,
    initial_training_fraction: float = 0.5,
) -> SplitLedger:
    """Patient-level split into golden / initial training / iterative reserve.

    Patients are ranked by a seeded keyed hash of their id, so the outcome
    does not depend on input order or duplicates. The lowest
    ``round(golden_fraction * n)`` ranks form the golden set; the rest of the
    pool is split the same way (with a second key) into training and reserve.
    """
    if not 0.0 < golden_fraction < 1.0:
        raise DomainError(f"golden_fraction must lie in (0, 1), got {golden_fraction}")
    if not 0.0 <= initial_training_fraction <= 1.0:
        raise DomainError("initial_training_fraction must lie in [0, 1]")
    unique = sorted(set(patient_ids))
    if not unique:
        raise EmptyDatasetError("no patient ids to split")
    ranked = sorted(unique, key=lambda p: (keyed_unit(seed, "golden", p), p))
    n_golden = round(golden_fraction * len(unique))
    golden = frozenset(ranked[:n_golden])
    pool = sorted(ranked[n_golden:], key=lambda p: (keyed_unit(seed, "pool", p), p))
    n_train = round(initial_training_fraction * len(pool))
    return SplitLedger(golden=golden, training=frozenset(pool[:n_train]), reserve=frozenset(pool[n_train:]))


def accumulate(ledger: SplitLedger) -> SplitLedger:
    """training_{k+1} = training_k | drifting_k, whatever the decision at k was."""
    merged = ledger.training | ledger.drifting
    if merged & ledger.golden:
        raise ContaminationError("accumulation would move golden patients into training")
    return replace(ledger, training=merged, drifting=frozenset(), iteration=ledger.iteration + 1)


def dataset_fingerprint(records_or_ids: Iterable[PredictionRecord] | Iterable[str]) -> str:
    """Order-independent content hash of a split (records or bare patient ids)."""
    items = list(records_or_ids)
    if not items:
        raise EmptyDatasetError("cannot fingerprint an empty split")
    if isinstance(items[0], PredictionRecord):
        return content_fingerprint(items)
    return id_fingerprint(items)
