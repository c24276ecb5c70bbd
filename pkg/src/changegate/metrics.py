"""Scalar performance metrics computed from labelled score sets.

Undefined ratios (zero denominators) come back as ``None`` and are never
coerced to 0; downstream decision logic treats ``None`` as failed-safe.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError, EmptyDatasetError, SingleClassError
from .records import PredictionRecord, as_arrays, scored_fingerprint

Metric = float | None


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DomainError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MlcpsWeights:
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if len(self.entries) < 2:
            raise DomainError("MLCPS needs at least two metric axes")
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate MLCPS axis names: {names}")
        snapshot_fields = {f.name for f in fields(MetricSnapshot)}
        for name, w in self.entries:
            if name not in snapshot_fields:
                raise DomainError(f"unknown MLCPS metric {name!r}")
            if not w > 0:
                raise DomainError(f"MLCPS weight for {name!r} must be positive, got {w}")

    @classmethod
    def from_mapping(cls, weights: Mapping[str, float]) -> "MlcpsWeights":
        return cls(tuple((str(k), float(v)) for k, v in weights.items()))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    @property
    def values(self) -> list[float]:
        return [w for _, w in self.entries]


@dataclass(frozen=True)
class MetricSnapshot:
    sensitivity: Metric = None
    specificity: Metric = None
    ppv: Metric = None
    npv: Metric = None
    fnr: Metric = None
    fpr: Metric = None
    accuracy: Metric = None
    balanced_accuracy: Metric = None
    f1: Metric = None
    mcc: Metric = None
    kappa: Metric = None
    brier: Metric = None
    roc_auc: Metric = None
    pr_auc: Metric = None
    mlcps: Metric = None
    operating_threshold: Metric = None
    n_records: int = 0
    dataset_fingerprint: str = ""
    # Domain metrics outside the binary-classification suite (e.g. Dice).
    extra: Mapping[str, float] = field(default_factory=dict)

    def get(self, name: str) -> Metric:
        if name in self.extra:
            return self.extra[name]
        value = getattr(self, name, None)
        if isinstance(value, str):
            raise DomainError(f"{name!r} is not a numeric metric")
        return value

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["extra"] = dict(sorted(self.extra.items()))
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricSnapshot":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in d.items() if k in known}
        kwargs["extra"] = dict(d.get("extra") or {})
        return cls(**kwargs)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# Sensitivity 1.5, ROC-AUC 1.3, balanced accuracy 1.1, specificity 1.0 (raw).
SEPSIS_MLCPS_WEIGHTS = MlcpsWeights(
    (("sensitivity", 1.5), ("roc_auc", 1.3), ("balanced_accuracy", 1.1), ("specificity", 1.0))
)


def _ratio(num: float, den: float) -> Metric:
    return num / den if den else None


def confusion_counts(records: Sequence[PredictionRecord], threshold: float) -> ConfusionCounts:
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must lie in [0, 1], got {threshold}")
    labels, scores = as_arrays(records)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    tn = int(np.count_nonzero(~pred & ~pos))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def binary_metrics(counts: ConfusionCounts) -> dict[str, Metric]:
    """All ratio metrics derivable from a confusion matrix."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    n = counts.total
    if n == 0:
        raise EmptyDatasetError("confusion counts are all zero")
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    ppv = _ratio(tp, tp + fp)
    npv = _ratio(tn, tn + fn)
    acc = (tp + tn) / n
    bal = (sens + spec) / 2 if sens is not None and spec is not None else None
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)

    mcc_den = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = (tp * tn - fp * fn) / mcc_den if mcc_den else None

    p_chance = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
    kappa = (acc - p_chance) / (1 - p_chance) if p_chance != 1 else None

    return {
        "sensitivity": sens,
        "specificity": spec,
        "ppv": ppv,
        "npv": npv,
        "fnr": None if sens is None else 1.0 - sens,
        "fpr": None if spec is None else 1.0 - spec,
        "accuracy": acc,
        "balanced_accuracy": bal,
        "f1": f1,
        "mcc": mcc,
        "kappa": kappa,
    }


def roc_auc(records: Sequence[PredictionRecord]) -> float:
    """Mann-Whitney estimate of ROC-AUC; tied (pos, neg) pairs count one half."""
    labels, scores = as_arrays(records)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC-AUC needs both classes")
    # Midranks handle ties exactly.
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    ranks = (upper - (counts - 1) / 2.0)[inverse]
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def pr_auc(records: Sequence[PredictionRecord]) -> float:
    """Step-wise area under the precision-recall curve (average precision).

    Thresholds sweep every distinct score from high to low; each recall
    increment is weighted by the precision reached at that threshold.
    """
    labels, scores = as_arrays(records)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise SingleClassError("PR-AUC needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tps = np.cumsum(y)
    fps = np.cumsum(1 - y)
    # keep the last index of each tied score block
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp_at = tps[last].astype(float)
    fp_at = fps[last].astype(float)
    precision = tp_at / (tp_at + fp_at)
    recall = tp_at / n_pos
    recall_prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - recall_prev) * precision))


def brier_score(records: Sequence[PredictionRecord]) -> float:
    labels, scores = as_arrays(records)
    return float(np.mean((scores - labels) ** 2))


def mlcps(values: Sequence[float], weights: MlcpsWeights | Sequence[float]) -> float:
    """Weighted polar-area composite of metrics in [0, 1].

    Each metric is a radius on its own axis; the angle between consecutive
    axes is proportional to the weight of the first of the pair (the axis
    order is cyclic). The enclosed polygon area is normalised by the area of
    the same polygon with every radius at 1.
    """
    w = weights.values if isinstance(weights, MlcpsWeights) else [float(x) for x in weights]
    if len(values) != len(w) or len(w) < 2:
        raise DomainError("MLCPS needs matching value/weight vectors of length >= 2")
    for v in values:
        if v is None or not 0.0 <= v <= 1.0:
            raise DomainError(f"MLCPS inputs must lie in [0, 1], got {v!r}")
    total = sum(w)
    angles = [2 * math.pi * x / total for x in w]
    n = len(values)
    area = sum(values[i] * values[(i + 1) % n] * math.sin(angles[i]) for i in range(n))
    full = sum(math.sin(a) for a in angles)
    if full <= 0:
        raise DomainError("MLCPS weights produce a degenerate polygon")
    return min(1.0, max(0.0, area / full))


def pick_operating_threshold(records: Sequence[PredictionRecord], target_sensitivity: float) -> float:
    if not 0.0 < target_sensitivity <= 1.0:
        raise DomainError(f"target sensitivity must lie in (0, 1], got {target_sensitivity}")
    labels, scores = as_arrays(records)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise SingleClassError("cannot target sensitivity without positives")
    candidates = np.unique(scores)[::-1]
    pos_scores = np.sort(scores[labels == 1])
    neg_scores = np.sort(scores[labels == 0])
    best: tuple[float, float, float] | None = None
    for t in candidates:
        sens = (n_pos - np.searchsorted(pos_scores, t, side="left")) / n_pos
        if sens >= target_sensitivity:
            return float(t)
        spec = np.searchsorted(neg_scores, t, side="left") / len(neg_scores) if len(neg_scores) else 0.0
        key = (sens, spec, t)
        if best is None or key > best:
            best = key
    # Unreachable for target <= 1 (the minimum positive score reaches 100%),
    # kept so the documented fallback holds for any candidate set.
    return float(best[2])  # pragma: no cover


def snapshot(
    records: Sequence[PredictionRecord],
    threshold: float,
    weights: MlcpsWeights | None = SEPSIS_MLCPS_WEIGHTS,
) -> MetricSnapshot:
    counts = confusion_counts(records, threshold)
    m = binary_metrics(counts)
    labels, _ = as_arrays(records)
    both = 0 < int(labels.sum()) < len(labels)
    m["roc_auc"] = roc_auc(records) if both else None
    m["pr_auc"] = pr_auc(records) if labels.any() else None
    m["brier"] = brier_score(records)
    composite = None
    if weights is not None:
        vals = [m.get(name) for name in weights.names]
        if all(v is not None for v in vals):
            composite = mlcps(vals, weights)
    return MetricSnapshot(
        **m,
        mlcps=composite,
        operating_threshold=float(threshold),
        n_records=len(records),
        dataset_fingerprint=scored_fingerprint(records),
    )


def snapshot_from_values(
    values: Mapping[str, float],
    weights: MlcpsWeights | None = SEPSIS_MLCPS_WEIGHTS,
    fingerprint: str = "",
) -> MetricSnapshot:
    """Build a snapshot from tabulated values, deriving what the identities allow.

    Balanced accuracy, FNR and FPR are filled from sensitivity/specificity;
    MLCPS is recomputed when every weighted axis is available and no MLCPS
    value was supplied. Unknown keys go to ``extra``.
    """
    known = {f.name for f in fields(MetricSnapshot)} - {"extra", "n_records", "dataset_fingerprint"}
    core = {k: float(v) for k, v in values.items() if k in known and v is not None}
    extra = {k: float(v) for k, v in values.items() if k not in known and v is not None}
    sens, spec = core.get("sensitivity"), core.get("specificity")
    if sens is not None:
        core.setdefault("fnr", 1.0 - sens)
    if spec is not None:
        core.setdefault("fpr", 1.0 - spec)
    if sens is not None and spec is not None:
        core.setdefault("balanced_accuracy", (sens + spec) / 2)
    if "mlcps" not in core and weights is not None:
        vals = [core.get(n) for n in weights.names]
        if all(v is not None for v in vals):
            core["mlcps"] = mlcps(vals, weights)
    return MetricSnapshot(**core, dataset_fingerprint=fingerprint, extra=extra)
