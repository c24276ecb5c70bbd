from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from changegate.errors import DomainError, EmptyDatasetError, SingleClassError
from changegate.metrics import (
    SEPSIS_MLCPS_WEIGHTS,
    ConfusionCounts,
    MetricSnapshot,
    MlcpsWeights,
    binary_metrics,
    brier_score,
    confusion_counts,
    mlcps,
    pick_operating_threshold,
    pr_auc,
    roc_auc,
    snapshot,
    snapshot_from_values,
)

from conftest import make_records, random_records


def loop_counts(records, t):
    tp = fp = tn = fn = 0
    for r in records:
        if r.score >= t:
            if r.label:
                tp += 1
            else:
                fp += 1
        elif r.label:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def pairwise_auc(records):
    pos = [r.score for r in records if r.label == 1]
    neg = [r.score for r in records if r.label == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def sweep_pr_auc(records):
    n_pos = sum(r.label for r in records)
    area, prev_recall = 0.0, 0.0
    for t in sorted({r.score for r in records}, reverse=True):
        tp = sum(1 for r in records if r.score >= t and r.label == 1)
        fp = sum(1 for r in records if r.score >= t and r.label == 0)
        recall = tp / n_pos
        area += (recall - prev_recall) * (tp / (tp + fp))
        prev_recall = recall
    return area


def test_confusion_counts_small_example():
    recs = make_records([1, 1, 0, 0], [0.9, 0.4, 0.2, 0.8])
    assert confusion_counts(recs, 0.5) == ConfusionCounts(tp=1, fp=1, tn=1, fn=1)


def test_threshold_zero_predicts_everything_positive():
    recs = random_records(np.random.default_rng(1), 50)
    c = confusion_counts(recs, 0.0)
    assert c.tp + c.fp == 50 and c.tn == 0 and c.fn == 0


def test_confusion_counts_match_loop_oracle():
    rng = np.random.default_rng(2)
    recs = random_records(rng, 1000, levels=20)
    for t in (0.0, 0.25, 0.5, 0.55, 1.0):
        c = confusion_counts(recs, t)
        assert (c.tp, c.fp, c.tn, c.fn) == loop_counts(recs, t)


def test_confusion_counts_rejects_bad_threshold_and_empty_input():
    with pytest.raises(DomainError):
        confusion_counts(make_records([1], [0.5]), 1.5)
    with pytest.raises(EmptyDatasetError):
        confusion_counts([], 0.5)


def test_binary_metrics_arithmetic():
    m = binary_metrics(ConfusionCounts(tp=3, fp=1, tn=9, fn=1))
    assert m["sensitivity"] == 0.75
    assert m["specificity"] == 0.9
    assert m["ppv"] == 0.75
    assert m["npv"] == 0.9


def test_binary_metrics_without_positives_leaves_sensitivity_absent():
    m = binary_metrics(ConfusionCounts(tp=0, fp=2, tn=5, fn=0))
    assert m["sensitivity"] is None
    assert m["fnr"] is None
    assert m["balanced_accuracy"] is None
    assert m["specificity"] == 5 / 7


@given(st.integers(0, 60), st.integers(0, 60), st.integers(0, 60), st.integers(0, 60))
def test_binary_metrics_match_textbook_formulas(tp, fp, tn, fn):
    n = tp + fp + tn + fn
    if n == 0:
        return
    m = binary_metrics(ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn))
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = None if den == 0 else (tp * tn - fp * fn) / math.sqrt(den)
    po = (tp + tn) / n
    pe = ((tp + fn) / n) * ((tp + fp) / n) + ((tn + fp) / n) * ((tn + fn) / n)
    kappa = None if pe == 1 else (po - pe) / (1 - pe)
    f1 = None if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
    for name, expected in (("mcc", mcc), ("kappa", kappa), ("f1", f1), ("accuracy", po)):
        if expected is None:
            assert m[name] is None
        else:
            assert m[name] == pytest.approx(expected, abs=1e-12)


def test_roc_auc_examples():
    recs = make_records([1, 1, 0, 0], [0.8, 0.5, 0.5, 0.2])
    assert roc_auc(recs) == 0.875
    assert roc_auc(make_records([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.1])) == 1.0
    assert roc_auc(make_records([1, 0, 1, 0], [0.4] * 4)) == 0.5


def test_roc_auc_single_class_raises():
    with pytest.raises(SingleClassError):
        roc_auc(make_records([1, 1], [0.2, 0.3]))


def test_roc_auc_matches_pairwise_count():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 300:
        recs = random_records(rng, int(rng.integers(2, 25)), levels=int(rng.integers(2, 12)))
        if len({r.label for r in recs}) < 2:
            continue
        assert abs(roc_auc(recs) - pairwise_auc(recs)) <= 1e-12
        checked += 1


def test_pr_auc_examples():
    assert pr_auc(make_records([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.1])) == 1.0
    assert pr_auc(make_records([1, 1, 1], [0.3, 0.9, 0.5])) == 1.0
    with pytest.raises(SingleClassError):
        pr_auc(make_records([0, 0], [0.3, 0.4]))


def test_pr_auc_matches_threshold_sweep():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 300:
        recs = random_records(rng, int(rng.integers(1, 20)), levels=int(rng.integers(2, 10)))
        if not any(r.label for r in recs):
            continue
        assert abs(pr_auc(recs) - sweep_pr_auc(recs)) <= 1e-12
        checked += 1


def test_brier_score():
    assert brier_score(make_records([1, 0], [0.75, 0.5])) == pytest.approx((0.0625 + 0.25) / 2)


def test_mlcps_examples():
    assert mlcps([1.0, 1.0, 1.0, 1.0], SEPSIS_MLCPS_WEIGHTS) == pytest.approx(1.0)
    assert mlcps([0.723, 0.922, 0.828, 0.933], SEPSIS_MLCPS_WEIGHTS) == pytest.approx(0.721, abs=0.01)
    assert mlcps([0.809, 0.922, 0.845, 0.881], SEPSIS_MLCPS_WEIGHTS) == pytest.approx(0.746, abs=0.01)


def test_mlcps_equal_weights_regular_polygon():
    # Equal weights and a common radius r give area ratio r^2.
    assert mlcps([0.5, 0.5, 0.5, 0.5], [1, 1, 1, 1]) == pytest.approx(0.25)


def test_mlcps_rejects_out_of_range_inputs():
    with pytest.raises(DomainError):
        mlcps([1.2, 0.5], [1, 1])
    with pytest.raises(DomainError):
        mlcps([0.5, None], [1, 1])
    with pytest.raises(DomainError):
        mlcps([0.5], [1])
    with pytest.raises(DomainError):
        MlcpsWeights((("sensitivity", 1.0), ("sensitivity", 2.0)))
    with pytest.raises(DomainError):
        MlcpsWeights((("sensitivity", 1.0), ("nonsense", 2.0)))


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), st.integers(0, 3), st.floats(0, 1))
def test_mlcps_monotone_in_each_axis(values, axis, bump):
    raised = list(values)
    raised[axis] = max(values[axis], bump)
    assert mlcps(raised, SEPSIS_MLCPS_WEIGHTS) >= mlcps(values, SEPSIS_MLCPS_WEIGHTS) - 1e-12


def test_pick_operating_threshold_examples():
    recs = make_records([1, 1, 1, 0, 0], [0.9, 0.8, 0.3, 0.5, 0.1])
    assert pick_operating_threshold(recs, 0.66) == 0.8
    assert pick_operating_threshold(recs, 1.0) == 0.3
    assert pick_operating_threshold(recs, 0.01) == 0.9


def test_pick_operating_threshold_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(200):
        recs = random_records(rng, int(rng.integers(2, 20)), levels=10)
        if not any(r.label for r in recs):
            continue
        target = float(rng.uniform(0.05, 1.0))
        n_pos = sum(r.label for r in recs)
        ok = [
            t
            for t in sorted({r.score for r in recs})
            if sum(1 for r in recs if r.label and r.score >= t) / n_pos >= target
        ]
        assert pick_operating_threshold(recs, target) == max(ok)


def test_snapshot_is_deterministic_and_order_invariant():
    recs = random_records(np.random.default_rng(6), 200)
    a = snapshot(recs, 0.5)
    b = snapshot(recs, 0.5)
    shuffled = list(recs)
    random.Random(0).shuffle(shuffled)
    assert a.canonical_json() == b.canonical_json() == snapshot(shuffled, 0.5).canonical_json()


def test_snapshot_matches_per_metric_oracles():
    recs = random_records(np.random.default_rng(7), 400, levels=50)
    s = snapshot(recs, 0.5)
    tp, fp, tn, fn = loop_counts(recs, 0.5)
    assert s.sensitivity == pytest.approx(tp / (tp + fn), abs=1e-12)
    assert s.specificity == pytest.approx(tn / (tn + fp), abs=1e-12)
    assert s.roc_auc == pytest.approx(pairwise_auc(recs), abs=1e-12)
    assert s.pr_auc == pytest.approx(sweep_pr_auc(recs), abs=1e-12)
    vals = [s.sensitivity, s.roc_auc, s.balanced_accuracy, s.specificity]
    assert s.mlcps == pytest.approx(mlcps(vals, SEPSIS_MLCPS_WEIGHTS), abs=1e-12)
    assert s.n_records == 400


def test_snapshot_round_trips_through_dict():
    s = snapshot(random_records(np.random.default_rng(8), 50), 0.4)
    assert MetricSnapshot.from_dict(s.to_dict()) == s


def test_snapshot_from_values_derives_identities():
    s = snapshot_from_values({"sensitivity": 0.8, "specificity": 0.9, "roc_auc": 0.9, "dsc": 0.7})
    assert s.balanced_accuracy == pytest.approx(0.85)
    assert s.fnr == pytest.approx(0.2)
    assert s.get("dsc") == 0.7
    assert s.mlcps == pytest.approx(mlcps([0.8, 0.9, 0.85, 0.9], SEPSIS_MLCPS_WEIGHTS))
