from .engine import (
    alarm_conditions,
    compose,
    decide,
    deployment_decision,
    evaluate_conditions,
    initial_references,
    pms_alarm,
    required_actions,
    update_references,
)
from ..categories import Decision, Priority, RuleProfile
from .model import ConditionEvaluation, DecisionRecord, ReferenceState, RouteStep, format_trace
from .resampling import (
    AcceptanceVerdict,
    bootstrap_delta_ci,
    classify_interval,
    decision_confidence,
    noninferiority_test,
)

__all__ = [
    "AcceptanceVerdict",
    "ConditionEvaluation",
    "Decision",
    "DecisionRecord",
    "Priority",
    "ReferenceState",
    "RouteStep",
    "RuleProfile",
    "alarm_conditions",
    "bootstrap_delta_ci",
    "classify_interval",
    "compose",
    "decide",
    "decision_confidence",
    "deployment_decision",
    "evaluate_conditions",
    "format_trace",
    "initial_references",
    "noninferiority_test",
    "pms_alarm",
    "required_actions",
    "update_references",
]
