"""Bootstrap decision confidence and CI-based non-inferiority testing."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..config import GovernanceConfig
from ..drift import DriftReport
from ..errors import DomainError
from ..metrics import MlcpsWeights, snapshot
from ..records import PredictionRecord
from .engine import deployment_decision, evaluate_conditions
from ..categories import Decision
from .model import ReferenceState


def _by_patient(records: Sequence[PredictionRecord]) -> list[list[PredictionRecord]]:
    groups: dict[str, list[PredictionRecord]] = {}
    for r in records:
        groups.setdefault(r.patient_id, []).append(r)
    return [groups[k] for k in sorted(groups)]


def _resample(groups: list[list[PredictionRecord]], rng: np.random.Generator) -> list[PredictionRecord]:
    picks = rng.integers(0, len(groups), size=len(groups))
    return [r for i in picks for r in groups[i]]


def _decide(golden, drifting, threshold, weights, refs, cfg, drift, tai_score) -> Decision:
    g = snapshot(golden, threshold, weights)
    d = snapshot(drifting, threshold, weights) if drifting else None
    return deployment_decision(evaluate_conditions(g, d, drift, tai_score, refs, cfg), cfg)[0]


def decision_confidence(
    golden_records: Sequence[PredictionRecord],
    drift_records: Sequence[PredictionRecord] | None,
    threshold: float,
    weights: MlcpsWeights | None,
    refs: ReferenceState,
    cfg: GovernanceConfig,
    B: int,
    seed: int,
    drift: DriftReport | None = None,
    tai_score: float | None = None,
) -> float:
    """Fraction of patient-level bootstrap replicates that reproduce the point decision."""
    if B < 1:
        raise DomainError("B must be at least 1")
    point = _decide(golden_records, drift_records, threshold, weights, refs, cfg, drift, tai_score)
    rng = np.random.default_rng(seed)
    g_groups = _by_patient(golden_records)
    d_groups = _by_patient(drift_records) if drift_records else None
    same = 0
    for _ in range(B):
        g = _resample(g_groups, rng)
        d = _resample(d_groups, rng) if d_groups else None
        same += _decide(g, d, threshold, weights, refs, cfg, drift, tai_score) is point
    return same / B


class AcceptanceVerdict(str, enum.Enum):
    EQUIVALENT = "EQUIVALENT"
    NON_INFERIOR = "NON_INFERIOR"
    FAIL = "FAIL"


@dataclass(frozen=True)
class DeltaInterval:
    point: float | None
    lower: float
    upper: float
    failed_replicates: int


def _metric(records, metric, threshold) -> float | None:
    return snapshot(records, threshold, weights=None).get(metric)


def bootstrap_delta_ci(
    current_records: Sequence[PredictionRecord],
    reference_value: float,
    metric: str,
    alpha: float,
    B: int,
    seed: int,
    threshold: float = 0.5,
    max_retries: int = 20,
) -> DeltaInterval:
    """Percentile CI of ``metric(resample) - reference_value``.

    Replicates where the metric is undefined are redrawn up to
    ``max_retries`` times; a replicate that never yields a value counts as
    minus infinity, which can only widen the interval downwards.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if B < 1:
        raise DomainError("B must be at least 1")
    rng = np.random.default_rng(seed)
    groups = _by_patient(current_records)
    deltas = np.empty(B)
    failed = 0
    for b in range(B):
        value = None
        for _ in range(max_retries + 1):
            value = _metric(_resample(groups, rng), metric, threshold)
            if value is not None:
                break
        if value is None:
            failed += 1
            deltas[b] = -np.inf
        else:
            deltas[b] = value - reference_value
    lower = float(np.quantile(deltas, alpha / 2, method="inverted_cdf"))
    upper = float(np.quantile(deltas, 1 - alpha / 2, method="inverted_cdf"))
    point = _metric(current_records, metric, threshold)
    return DeltaInterval(None if point is None else point - reference_value, lower, upper, failed)


def classify_interval(lower: float, upper: float, delta: float) -> AcceptanceVerdict:
    if delta <= 0:
        raise DomainError("margin delta must be positive")
    if lower >= -delta:
        if upper <= delta:
            return AcceptanceVerdict.EQUIVALENT
        return AcceptanceVerdict.NON_INFERIOR
    return AcceptanceVerdict.FAIL


def noninferiority_test(
    current_records: Sequence[PredictionRecord],
    reference_value: float,
    metric: str,
    delta: float,
    alpha: float,
    B: int,
    seed: int,
    threshold: float = 0.5,
) -> AcceptanceVerdict:
    """EQUIVALENT if the CI sits inside [-delta, delta], NON_INFERIOR if only its lower end clears -delta."""
    if delta <= 0:
        raise DomainError("margin delta must be positive")
    ci = bootstrap_delta_ci(current_records, reference_value, metric, alpha, B, seed, threshold)
    return classify_interval(ci.lower, ci.upper, delta)
