from .cohort import apply_perturbation, generate_cohort, patient_score, score_records
from .lifecycle import run_lifecycle
from .replay import ReplayRow, load_rows, replay_table, table_path
from .scenarios import (
    CohortSpec,
    LifecyclePlan,
    ScenarioKind,
    ScenarioSpec,
    ScoreModel,
    default_plan_path,
    load_default_plan,
    load_plan,
    plan_from_mapping,
)

__all__ = [
    "CohortSpec",
    "LifecyclePlan",
    "ReplayRow",
    "ScenarioKind",
    "ScenarioSpec",
    "ScoreModel",
    "apply_perturbation",
    "default_plan_path",
    "generate_cohort",
    "load_default_plan",
    "load_plan",
    "load_rows",
    "patient_score",
    "plan_from_mapping",
    "replay_table",
    "run_lifecycle",
    "score_records",
    "table_path",
]
