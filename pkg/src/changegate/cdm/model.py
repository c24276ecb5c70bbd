"""Data types of the conditional decision engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from ..categories import Decision, Priority
from ..metrics import MetricSnapshot


@dataclass(frozen=True)
class ConditionEvaluation:
    """One atomic condition. ``outcome`` True means the condition fired (a failure/trigger)."""

    condition_id: str
    description: str
    value_observed: float | None
    threshold_used: float | tuple[float | None, float | None] | None
    outcome: bool
    priority: Priority

    def to_dict(self) -> dict[str, Any]:
        thr = self.threshold_used
        return {
            "condition_id": self.condition_id,
            "description": self.description,
            "value_observed": self.value_observed,
            "threshold_used": list(thr) if isinstance(thr, tuple) else thr,
            "outcome": self.outcome,
            "priority": self.priority.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConditionEvaluation":
        thr = d["threshold_used"]
        return cls(
            d["condition_id"],
            d["description"],
            d["value_observed"],
            tuple(thr) if isinstance(thr, list) else thr,
            bool(d["outcome"]),
            Priority(d["priority"]),
        )


@dataclass(frozen=True)
class RouteStep:
    priority: Priority
    status: str  # "passed", "selected" or "skipped"


def format_trace(trace: tuple[RouteStep, ...] | list[RouteStep]) -> str:
    """Render a routing trace in table notation, e.g. ``P1✓ P2✓ →P3``."""
    parts = []
    for step in trace:
        if step.status == "passed":
            parts.append(f"{step.priority.value}✓")
        elif step.status == "selected":
            parts.append(f"→{step.priority.value}")
    return " ".join(parts)


@dataclass(frozen=True)
class ReferenceState:
    p_ref: MetricSnapshot | None = None
    p_rel_golden: MetricSnapshot | None = None
    p_rel_drift: MetricSnapshot | None = None
    last_approved_iteration: int | None = None
    # Candidate performance on the previous drifting batch (segmentation alarm rule).
    previous_drift: MetricSnapshot | None = None
    p_ref_preset: bool = False

    @property
    def has_released_model(self) -> bool:
        return self.last_approved_iteration is not None

    def to_dict(self) -> dict[str, Any]:
        def snap(s: MetricSnapshot | None):
            return None if s is None else s.to_dict()

        return {
            "p_ref": snap(self.p_ref),
            "p_rel_golden": snap(self.p_rel_golden),
            "p_rel_drift": snap(self.p_rel_drift),
            "last_approved_iteration": self.last_approved_iteration,
            "previous_drift": snap(self.previous_drift),
            "p_ref_preset": self.p_ref_preset,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReferenceState":
        def snap(x):
            return None if x is None else MetricSnapshot.from_dict(x)

        return cls(
            p_ref=snap(d.get("p_ref")),
            p_rel_golden=snap(d.get("p_rel_golden")),
            p_rel_drift=snap(d.get("p_rel_drift")),
            last_approved_iteration=d.get("last_approved_iteration"),
            previous_drift=snap(d.get("previous_drift")),
            p_ref_preset=bool(d.get("p_ref_preset", False)),
        )


@dataclass(frozen=True)
class DecisionRecord:
    iteration: int
    deployment_decision: Decision
    alarm: bool
    alarm_triggers: tuple[str, ...]
    trigger_reasons: tuple[str, ...]
    required_actions: tuple[str, ...]
    routing_trace: tuple[RouteStep, ...]
    logged_artifacts: Mapping[str, Any] = field(default_factory=dict)
    confidence: float | None = None

    @property
    def composite(self) -> str:
        label = self.deployment_decision.value
        return f"{label}+ALARM" if self.alarm else label

    @property
    def trace_text(self) -> str:
        return format_trace(self.routing_trace)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "deployment_decision": self.deployment_decision.value,
            "alarm": self.alarm,
            "alarm_triggers": list(self.alarm_triggers),
            "trigger_reasons": list(self.trigger_reasons),
            "required_actions": list(self.required_actions),
            "routing_trace": [[s.priority.value, s.status] for s in self.routing_trace],
            "routing_trace_text": self.trace_text,
            "confidence": self.confidence,
            "logged_artifacts": self.logged_artifacts,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DecisionRecord":
        return cls(
            iteration=int(d["iteration"]),
            deployment_decision=Decision(d["deployment_decision"]),
            alarm=bool(d["alarm"]),
            alarm_triggers=tuple(d["alarm_triggers"]),
            trigger_reasons=tuple(d["trigger_reasons"]),
            required_actions=tuple(d["required_actions"]),
            routing_trace=tuple(RouteStep(Priority(p), s) for p, s in d["routing_trace"]),
            logged_artifacts=d.get("logged_artifacts", {}),
            confidence=d.get("confidence"),
        )
