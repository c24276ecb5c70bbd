"""The iteration loop: ingest, drift test, snapshots, decision, references, accumulation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..audit import AuditLog, EntryKind
from ..cdm.engine import decide, initial_references
from ..cdm.model import DecisionRecord
from ..cdm.resampling import decision_confidence
from ..categories import Decision
from ..darm import BatchRegistry, SplitLedger, accumulate, assign_splits
from ..drift import drift_report
from ..metrics import pick_operating_threshold, snapshot
from ..records import PredictionRecord, feature_matrix
from .cohort import apply_perturbation, generate_cohort, score_records
from .scenarios import LifecyclePlan, ScenarioSpec, ScoreModel


@dataclass(frozen=True)
class _Model:
    params: ScoreModel
    key: int
    iteration: int


def _model_key(seed: int, iteration: int) -> int:
    return seed * 1000 + iteration


def _draw_batch(
    plan: LifecyclePlan,
    k: int,
    scenario: ScenarioSpec,
    ledger: SplitLedger,
    pool: dict[str, PredictionRecord],
) -> list[PredictionRecord]:
    """Take the batch from the iterative reserve while it lasts, else a fresh site-A cohort."""
    if len(ledger.reserve) >= scenario.n_records:
        ids = sorted(ledger.reserve)[: scenario.n_records]
        return [pool[i] for i in ids]
    return generate_cohort(plan.cohort, scenario.n_records, plan.seed + scenario.seed, "A", f"K{k:02d}-")


def _window(cfg, records: Sequence[PredictionRecord]) -> np.ndarray:
    return feature_matrix(records, cfg.monitored_features)


def run_lifecycle(plan: LifecyclePlan, audit: AuditLog | str | Path | None = None) -> list[DecisionRecord]:
    """Run every planned iteration and return the decision stream.

    When ``audit`` is given (a log handle or a path) every step is appended
    as it happens, so an aborted run leaves its partial trail behind.
    """
    cfg = plan.config
    if isinstance(audit, (str, Path)):
        audit = AuditLog(audit)
    chash = cfg.config_hash()

    def log(kind: EntryKind, payload: dict) -> None:
        if audit is not None:
            audit.append(kind, payload, chash)

    seed = plan.seed
    weights = cfg.mlcps_weights
    registry = BatchRegistry()

    cohort = generate_cohort(plan.cohort, plan.n_initial, seed, "A", "I")
    pool = {r.patient_id: r for r in cohort}
    truth = {r.patient_id: r.label for r in cohort}
    ledger = assign_splits(pool, plan.golden_fraction, seed, plan.initial_training_fraction)
    golden = [pool[p] for p in sorted(ledger.golden)]
    training0 = [pool[p] for p in sorted(ledger.training)]
    manifest = registry.register(
        cohort,
        source="synthetic-site-A",
        collection_window=("iteration-0", "iteration-0"),
        labelling_method="synthetic ground truth",
        reviewer_ids=("simulator",),
        ingest_timestamp="iteration-0",
    )
    log(EntryKind.BATCH_REGISTERED, {"iteration": 0, "manifest": manifest.to_dict(), "ledger": ledger.to_dict()})

    base = plan.cohort.score_model
    model0 = _Model(base, _model_key(seed, 0), 0)
    threshold = pick_operating_threshold(score_records(training0, base, seed, model0.key), cfg.target_sensitivity)
    reference_window = _window(cfg, training0)

    refs = initial_references(cfg)
    released: _Model | None = None
    out: list[DecisionRecord] = []
    sink = audit.decision_sink(chash) if audit is not None else None

    steps: list[tuple[int, ScenarioSpec | None]] = [(0, None), *plan.scenarios]
    for k, scenario in steps:
        if scenario is None:
            candidate, batch = model0, None
            incoming_window = reference_window
        else:
            raw = _draw_batch(plan, k, scenario, ledger, pool)
            for r in raw:
                truth.setdefault(r.patient_id, r.label)
            batch = apply_perturbation(raw, scenario, plan.cohort)
            manifest = registry.register(
                batch,
                source=f"synthetic-{scenario.kind.value.lower()}",
                collection_window=(f"iteration-{k}", f"iteration-{k}"),
                labelling_method="synthetic ground truth",
                reviewer_ids=("simulator",),
                ingest_timestamp=f"iteration-{k}",
            )
            ledger = ledger.with_drifting(r.patient_id for r in batch)
            log(
                EntryKind.BATCH_REGISTERED,
                {"iteration": k, "scenario": scenario.kind.value, "manifest": manifest.to_dict(), "ledger": ledger.to_dict()},
            )
            candidate = _Model(scenario.candidate or base, _model_key(seed, k), k)
            incoming_window = _window(cfg, batch)

        drift = None
        if cfg.drift_enabled:
            indices = cfg.monitored_features
            drift = drift_report(reference_window, incoming_window, cfg.alpha, cfg.drift_bands, indices)
            log(EntryKind.DRIFT_REPORT, {"iteration": k, "drift": drift.to_dict()})

        g_scored = score_records(golden, candidate.params, seed, candidate.key)
        cand_golden = snapshot(g_scored, threshold, weights)
        cand_drift = released_drift = None
        d_scored = None
        if batch is not None:
            d_scored = score_records(batch, candidate.params, seed, candidate.key, truth)
            cand_drift = snapshot(d_scored, threshold, weights)
            if released is not None:
                r_scored = score_records(batch, released.params, seed, released.key, truth)
                released_drift = snapshot(r_scored, threshold, weights)
        log(
            EntryKind.SNAPSHOT,
            {
                "iteration": k,
                "candidate_golden": cand_golden.to_dict(),
                "candidate_drift": None if cand_drift is None else cand_drift.to_dict(),
                "released_on_drift": None if released_drift is None else released_drift.to_dict(),
                "released_model_iteration": None if released is None else released.iteration,
            },
        )

        confidence = None
        if plan.confidence_replicates:
            confidence = decision_confidence(
                g_scored, d_scored, threshold, weights, refs, cfg, plan.confidence_replicates, seed + k, drift
            )

        record, refs = decide(
            k,
            cfg,
            refs,
            cand_golden,
            cand_drift,
            released_drift,
            drift,
            confidence=confidence,
            sink=sink,
            extra_artifacts={
                "n_training": len(ledger.training | ledger.drifting),
                "scenario": None if scenario is None else scenario.kind.value,
                "operating_threshold": threshold,
            },
        )
        out.append(record)
        if record.deployment_decision is Decision.APPROVE:
            released = candidate

        # Accumulation is unconditional: the decision gates the model, not the data.
        ledger = accumulate(ledger)
        log(
            EntryKind.REFERENCE_UPDATE,
            {
                "iteration": k,
                "references": refs.to_dict(),
                "released_model_iteration": None if released is None else released.iteration,
                "ledger": ledger.to_dict(),
            },
        )
    return out
