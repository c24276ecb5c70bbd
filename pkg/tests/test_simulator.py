from __future__ import annotations

import numpy as np
import pytest

from changegate.audit import iter_entries
from changegate.categories import Decision
from changegate.darm import assign_splits
from changegate.drift import DriftBand, drift_report
from changegate.errors import ConfigError, DomainError, SchemaError
from changegate.records import feature_matrix, id_fingerprint, scored_fingerprint
from changegate.simulator import (
    CohortSpec,
    ScenarioKind,
    ScenarioSpec,
    ScoreModel,
    apply_perturbation,
    generate_cohort,
    load_default_plan,
    load_rows,
    plan_from_mapping,
    replay_table,
    run_lifecycle,
    score_records,
    table_path,
)

import properties


def test_cohort_prevalence():
    recs = generate_cohort(CohortSpec(), 8134, seed=1)
    positives = sum(r.label for r in recs)
    sd = np.sqrt(8134 * 0.088 * 0.912)
    assert abs(positives - 716) <= 4 * sd


def test_cohort_is_seeded():
    a = generate_cohort(CohortSpec(), 200, seed=3)
    assert a == generate_cohort(CohortSpec(), 200, seed=3)
    assert a != generate_cohort(CohortSpec(), 200, seed=4)


def test_zero_prevalence():
    recs = generate_cohort(CohortSpec(prevalence=0.0), 300, seed=1)
    assert all(r.label == 0 for r in recs)
    with pytest.raises(DomainError):
        generate_cohort(CohortSpec(), 0, seed=1)


def test_site_b_shifts_only_the_configured_features():
    spec = CohortSpec(n_features=10, site_shift={"B": (4, 1.0)})
    a = feature_matrix(generate_cohort(spec, 3000, 1, "A"))
    b = feature_matrix(generate_cohort(spec, 3000, 2, "B"))
    gap = b.mean(axis=0) - a.mean(axis=0)
    assert np.all(gap[:4] > 0.8) and np.all(np.abs(gap[4:]) < 0.15)


def test_stationary_is_identity():
    recs = generate_cohort(CohortSpec(), 50, seed=1)
    assert apply_perturbation(recs, ScenarioSpec(ScenarioKind.STATIONARY, 50)) == recs


def test_catastrophic_flips_every_positive():
    recs = generate_cohort(CohortSpec(prevalence=0.3), 400, seed=2)
    spec = ScenarioSpec(
        ScenarioKind.CATASTROPHIC, 400, {"pos_flip_rate": 1.0, "neg_flip_rate": 0.0, "noise_sigma_multiplier": 0.0}
    )
    out = apply_perturbation(recs, spec)
    assert [o.label for o in out] == [0] * len(recs)
    assert [o.score for o in out] == [r.score for r in recs]


def test_extreme_shift_saturates_drift():
    recs = generate_cohort(CohortSpec(), 1000, seed=3)
    spec = ScenarioSpec(ScenarioKind.EXTREME_SHIFT, 1000, {"scale_factor": 5.0, "offset_sigmas": 5.0})
    shifted = apply_perturbation(recs, spec)
    rep = drift_report(feature_matrix(recs), feature_matrix(shifted))
    assert rep.drift_score == 1.0 and rep.band is DriftBand.MAJOR


def test_cross_site_mix_moves_the_requested_fraction():
    recs = generate_cohort(CohortSpec(), 400, seed=4)
    out = apply_perturbation(recs, ScenarioSpec(ScenarioKind.CROSS_SITE_MIX, 400, {"mix_fraction": 0.25}, seed=1))
    assert sum(o.site == "B" for o in out) == 100
    assert [o.patient_id for o in out] == [r.patient_id for r in recs]


def test_scenario_validation():
    with pytest.raises(ConfigError):
        ScenarioSpec(ScenarioKind.CATASTROPHIC, 10, {"pos_flip_rate": 0.5})
    with pytest.raises(ConfigError):
        ScenarioSpec(ScenarioKind.CROSS_SITE_MIX, 10, {"mix_fraction": 1.5})
    with pytest.raises(ConfigError):
        ScenarioSpec(ScenarioKind.STATIONARY, 0)
    with pytest.raises(ConfigError):
        ScoreModel(sd=0.0)
    with pytest.raises(ConfigError):
        plan_from_mapping({"iterations": [{"iteration": 2, "kind": "STATIONARY", "n_records": 10}]})
    with pytest.raises(ConfigError):
        plan_from_mapping({"iterations": [{"iteration": 1, "kind": "NOPE", "n_records": 10}]})


def _stationary_plan(seed=1, n=3):
    return plan_from_mapping(
        {
            "config": "sepsis",
            "seed": seed,
            "n_initial": 3000,
            "golden_fraction": 0.3,
            "cohort": {"n_features": 8, "prevalence": 0.3, "score_model": {"pos_mean": 0.75, "neg_mean": 0.25}},
            "iterations": [{"iteration": i, "kind": "STATIONARY", "n_records": 300} for i in range(1, n + 1)],
        }
    )


def test_all_stationary_plan_approves_everything():
    records = run_lifecycle(_stationary_plan())
    assert [r.deployment_decision for r in records] == [Decision.APPROVE] * 4
    assert all(r.logged_artifacts["drift"]["drift_score"] == 0.0 for r in records)
    # A2 may fire on sampling noise at this batch size; the floor and drift alarms may not.
    assert not any({"A1", "A3"} & set(r.alarm_triggers) for r in records)


def test_catastrophic_ending_rejects_with_alarm():
    plan = plan_from_mapping(
        {
            "config": "sepsis",
            "seed": 2,
            "n_initial": 3000,
            "golden_fraction": 0.3,
            "cohort": {"n_features": 8, "prevalence": 0.3, "score_model": {"pos_mean": 0.75, "neg_mean": 0.25}},
            "iterations": [
                {"iteration": 1, "kind": "STATIONARY", "n_records": 300},
                {
                    "iteration": 2,
                    "kind": "CATASTROPHIC",
                    "n_records": 600,
                    "seed": 3,
                    "params": {"pos_flip_rate": 0.8, "neg_flip_rate": 0.3, "noise_sigma_multiplier": 4.0},
                    "candidate": {"pos_mean": 0.3},
                },
            ],
        }
    )
    final = run_lifecycle(plan)[-1]
    assert final.composite == "REJECT+ALARM"
    assert "A1" in final.alarm_triggers


def test_training_grows_after_a_reject():
    plan = plan_from_mapping(
        {
            "config": "sepsis",
            "seed": 5,
            "n_initial": 2000,
            "cohort": {"n_features": 4, "prevalence": 0.3},
            "iterations": [
                {"iteration": 1, "kind": "REGRESSION_PROBE", "n_records": 100, "candidate": {"pos_mean": 0.3}},
                {"iteration": 2, "kind": "STATIONARY", "n_records": 100},
            ],
        }
    )
    records = run_lifecycle(plan)
    assert records[1].deployment_decision is Decision.REJECT
    sizes = [r.logged_artifacts["n_training"] for r in records]
    assert sizes[2] == sizes[1] + 100


def test_lifecycle_fingerprints_match_recomputation(tmp_path):
    plan = _stationary_plan(n=2)
    log = tmp_path / "run.jsonl"
    records = run_lifecycle(plan, log)
    cohort = generate_cohort(plan.cohort, plan.n_initial, plan.seed, "A", "I")
    ledger = assign_splits([r.patient_id for r in cohort], plan.golden_fraction, plan.seed, plan.initial_training_fraction)
    golden = [r for r in cohort if r.patient_id in ledger.golden]
    for rec in records:
        key = plan.seed * 1000 + rec.iteration
        rescored = score_records(golden, plan.cohort.score_model, plan.seed, key)
        assert rec.logged_artifacts["dataset_fingerprints"]["golden"] == scored_fingerprint(rescored)
    logged = {
        e.payload["ledger"]["golden_fingerprint"] for e in iter_entries(log) if "ledger" in e.payload
    }
    assert logged == {id_fingerprint(ledger.golden)}


def test_golden_isolation_on_random_plans(monkeypatch):
    assert properties.check_golden_isolation(3, seed=100, monkeypatch=monkeypatch) == 3


def test_default_plan_loads():
    plan = load_default_plan()
    assert plan.seed == 4 and len(plan.scenarios) == 10
    assert load_default_plan(seed=9).seed == 9
    assert plan.n_initial + sum(s.n_records for _, s in plan.scenarios) <= 50_000


# -- replay ----------------------------------------------------------------

def test_replay_table8(segmentation_cfg):
    records = replay_table(load_rows(table_path("table8_segmentation")), segmentation_cfg)
    got = [r.composite for r in records]
    assert got == [
        "REJECT", "REJECT", "APPROVE+ALARM", "APPROVE", "APPROVE+ALARM", "APPROVE",
        "APPROVE", "REJECT", "REJECT+ALARM", "REJECT", "REJECT", "REJECT",
    ]


def test_replay_requires_the_metrics_the_profile_consumes(tmp_path, sepsis_cfg):
    p = tmp_path / "rows.csv"
    p.write_text("iteration,sensitivity,drift_score\n0,0.8,0.0\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        replay_table(load_rows(p), sepsis_cfg)
    p.write_text("iteration,sensitivity,specificity\n0,0.8,0.9\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        replay_table(load_rows(p), sepsis_cfg)


def test_replay_rejects_malformed_rows(tmp_path):
    p = tmp_path / "rows.csv"
    p.write_text("iteration,sensitivity\n0,0.8,0.9\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_rows(p)
    p.write_text("iteration,sensitivity\n0,high\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_rows(p)
    p.write_text("sensitivity\n0.8\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_rows(p)


def test_replay_with_released_columns_evaluates_field_alarms(tmp_path, sepsis_cfg):
    p = tmp_path / "rows.csv"
    p.write_text(
        "iteration,sensitivity,specificity,roc_auc,drift_score,released_sensitivity\n"
        "0,0.75,0.9,0.9,0.0,\n"
        "1,0.75,0.9,0.9,0.0,0.60\n",
        encoding="utf-8",
    )
    records = replay_table(load_rows(p), sepsis_cfg)
    assert records[0].composite == "APPROVE"
    assert records[1].composite == "APPROVE+ALARM"
    assert records[1].alarm_triggers == ("A1", "A2")


def test_replay_boundary_row(tmp_path, sepsis_cfg):
    p = tmp_path / "rows.csv"
    p.write_text(
        "iteration,sensitivity,specificity,roc_auc,drift_score\n"
        "0,0.723,0.9,0.9,0.0\n"
        "1,0.708,0.60,0.9,0.30\n"
        "2,0.708,0.60,0.9,0.90\n",
        encoding="utf-8",
    )
    records = replay_table(load_rows(p), sepsis_cfg)
    assert [r.composite for r in records] == ["APPROVE", "CONDITIONAL_APPROVAL", "APPROVE"]
