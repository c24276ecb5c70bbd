"""Atomic conditions, priority-ordered deployment routing, and the parallel PMS alarm.

Every condition is a *trigger*: ``outcome=True`` means something failed.
The deployment decision is the first active priority (P1 -> P3) with a
fired condition, else APPROVE. The alarm is the disjunction of A1-A3 and
never looks at candidate-on-golden metrics.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Callable, Mapping, Sequence

from ..config import GovernanceConfig
from ..drift import DriftBand, DriftReport
from ..errors import ContaminationError, IntegrityError
from ..metrics import MetricSnapshot
from ..categories import DECISION_PRIORITY, PRIORITY_DECISION, Decision, Priority, RuleProfile
from .model import ConditionEvaluation, DecisionRecord, ReferenceState, RouteStep

# Differences are compared after rounding so that tabulated values sitting
# exactly on a boundary land on the side the inequality says they should.
_DIGITS = 12

TAI_GAP_NOTE = "TAI score is an externally aggregated scalar; no aggregation formula is applied here"

REQUIRED_ACTIONS = {
    Decision.APPROVE: ("release candidate model", "update released performance reference"),
    Decision.CONDITIONAL_APPROVAL: ("release candidate model", "enable enhanced monitoring"),
    Decision.CLINICAL_REVIEW: ("hold release", "request human clinical validation"),
    Decision.REJECT: ("block release", "retain prior released model"),
}
ALARM_ACTIONS = ("open PMS investigation",)
CRITICAL_ACTIONS = ("rollback candidate", "escalate PMS vigilance report")


def _r(x: float) -> float:
    return round(x, _DIGITS)


def _lt(a: float, b: float) -> bool:
    return _r(a) < _r(b)


def _le(a: float, b: float) -> bool:
    return _r(a) <= _r(b)


def _absent(metric: str, where: str) -> ConditionEvaluation:
    return ConditionEvaluation(
        f"absent.{where}.{metric}",
        f"{metric} undefined on {where} set (failed-safe)",
        None,
        None,
        True,
        Priority.P2,
    )


def evaluate_conditions(
    candidate_golden: MetricSnapshot,
    candidate_drift: MetricSnapshot | None,
    drift: DriftReport | None,
    tai_score: float | None,
    refs: ReferenceState,
    cfg: GovernanceConfig,
) -> list[ConditionEvaluation]:
    """Evaluate every deployment-side atomic condition (P1-P3)."""
    if (
        candidate_drift is not None
        and candidate_golden.dataset_fingerprint
        and candidate_golden.dataset_fingerprint == candidate_drift.dataset_fingerprint
    ):
        raise ContaminationError("golden and drifting evaluation sets have the same fingerprint")

    if cfg.rule_profile is RuleProfile.SEGMENTATION_STYLE:
        return _segmentation_conditions(candidate_golden, refs, cfg)

    out: list[ConditionEvaluation] = []
    g = candidate_golden

    for m, floor in cfg.p_fail.items():
        v = g.get(m)
        if v is None:
            out.append(_absent(m, "golden"))
            continue
        out.append(ConditionEvaluation(f"p_fail.{m}", f"{m} < {floor:g}", v, floor, _lt(v, floor), Priority.P1))
    for m, ceiling in cfg.safety_ceilings.items():
        v = g.get(m)
        if v is None:
            out.append(_absent(m, "golden"))
            continue
        out.append(
            ConditionEvaluation(f"ceiling.{m}", f"{m} > {ceiling:g}", v, ceiling, _lt(ceiling, v), Priority.P1)
        )

    for m, (lo, hi) in cfg.buffer_zone.items():
        v = g.get(m)
        if v is None:
            out.append(_absent(m, "golden"))
            continue
        outside = (lo is not None and _lt(v, lo)) or (hi is not None and _lt(hi, v))
        desc = f"{m} outside acceptable range [{'' if lo is None else f'{lo:g}'}, {'' if hi is None else f'{hi:g}'}]"
        out.append(ConditionEvaluation(f"buffer.{m}", desc, v, (lo, hi), outside, Priority.P2))

    if refs.p_ref is not None:
        for m, tol in cfg.ref_tolerance.items():
            ref_v, v = refs.p_ref.get(m), g.get(m)
            if ref_v is None:
                continue
            if v is None:
                out.append(_absent(m, "golden"))
                continue
            gap = ref_v - v
            out.append(
                ConditionEvaluation(
                    f"ref_regression.{m}",
                    f"regression from fixed reference = {-gap:+.3f}",
                    v,
                    tol,
                    _lt(tol, gap),
                    Priority.P2,
                )
            )

    if cfg.drift_enabled:
        lo, hi = cfg.drift_bands.minor
        if drift is None:
            out.append(
                ConditionEvaluation("drift.minor", "drift score unavailable (failed-safe)", None, (lo, hi), True, Priority.P3)
            )
        else:
            s = drift.drift_score
            fired = _le(lo, s) and _le(s, hi)
            out.append(
                ConditionEvaluation("drift.minor", f"minor drift in [{lo:.2f}, {hi:.2f}]", s, (lo, hi), fired, Priority.P3)
            )

    if cfg.tai_threshold is not None:
        thr = cfg.tai_threshold
        if tai_score is None:
            out.append(ConditionEvaluation("tai", "TAI score unavailable (failed-safe)", None, thr, True, Priority.P3))
        else:
            out.append(
                ConditionEvaluation("tai", f"TAI score < {thr:g}", tai_score, thr, _lt(tai_score, thr), Priority.P3)
            )
    return out


def _segmentation_conditions(g: MetricSnapshot, refs: ReferenceState, cfg: GovernanceConfig) -> list[ConditionEvaluation]:
    out = []
    m = cfg.primary_metric
    v = g.get(m)
    if v is None:
        return [_absent(m, "golden")]
    for metric, floor in cfg.p_fail.items():
        fv = g.get(metric)
        if fv is None:
            out.append(_absent(metric, "golden"))
            continue
        out.append(
            ConditionEvaluation(
                f"p_fail.{metric}", f"safety violation ({metric} < {floor:g})", fv, floor, _lt(fv, floor), Priority.P1
            )
        )
    if refs.p_rel_golden is not None and refs.p_rel_golden.get(m) is not None:
        rel = refs.p_rel_golden.get(m)
        out.append(
            ConditionEvaluation(
                f"rel_regression.{m}",
                f"{m} below released reference {rel:.3f}",
                v,
                rel,
                _lt(v, rel),
                Priority.P1,
            )
        )
    return out


def _effective_decision(priority: Priority, active: frozenset[Decision]) -> Decision:
    """Route a fired priority to its category, or the nearest more conservative active one."""
    d = PRIORITY_DECISION[priority]
    while d not in active:
        d = next(x for x in Decision if x.rank == d.rank - 1)
    return d


def deployment_decision(
    evals: Sequence[ConditionEvaluation], cfg: GovernanceConfig
) -> tuple[Decision, tuple[RouteStep, ...]]:
    """Resolve the fired conditions in priority order; total over every input."""
    fired_at: dict[Priority, bool] = {}
    for e in evals:
        if e.priority not in (Priority.P1, Priority.P2, Priority.P3):
            continue
        target = DECISION_PRIORITY[_effective_decision(e.priority, cfg.active_categories)]
        fired_at[target] = fired_at.get(target, False) or e.outcome

    trace: list[RouteStep] = []
    for p in (Priority.P1, Priority.P2, Priority.P3):
        if PRIORITY_DECISION[p] not in cfg.active_categories:
            trace.append(RouteStep(p, "skipped"))
            continue
        if fired_at.get(p, False):
            trace.append(RouteStep(p, "selected"))
            return PRIORITY_DECISION[p], tuple(trace)
        trace.append(RouteStep(p, "passed"))
    trace.append(RouteStep(Priority.P4, "selected"))
    return Decision.APPROVE, tuple(trace)


def alarm_conditions(
    released_on_drift: MetricSnapshot | None,
    refs: ReferenceState,
    drift: DriftReport | None,
    cfg: GovernanceConfig,
) -> list[ConditionEvaluation]:
    """A1-A3 for the released model on the incoming batch.

    Under SEGMENTATION_STYLE the monitored snapshot is the performance on the
    incoming batch and the only alarm is a decline versus the previous batch.
    """
    m = cfg.alarm_metric
    if cfg.rule_profile is RuleProfile.SEGMENTATION_STYLE:
        if released_on_drift is None or refs.previous_drift is None:
            return []
        v, prev = released_on_drift.get(m), refs.previous_drift.get(m)
        if prev is None:
            return []
        fired = v is None or _lt(v, prev)
        return [
            ConditionEvaluation(
                f"drift_decline.{m}", f"{m} on incoming batch below previous batch ({prev:.3f})", v, prev, fired, Priority.A2
            )
        ]

    out: list[ConditionEvaluation] = []
    if refs.has_released_model and released_on_drift is not None:
        v = released_on_drift.get(m)
        floor = cfg.effective_p_pms.get(m)
        if floor is not None:
            fired = v is None or _lt(v, floor)
            out.append(ConditionEvaluation(f"pms_floor.{m}", f"released {m} < {floor:g}", v, floor, fired, Priority.A1))
        tau = cfg.tau.get(m)
        rel = refs.p_rel_golden.get(m) if refs.p_rel_golden is not None else None
        if tau is not None and rel is not None:
            fired = v is None or _le(v, rel - tau)
            out.append(
                ConditionEvaluation(
                    f"released_regression.{m}",
                    f"released {m} <= released reference {rel:.3f} - {tau:g}",
                    v,
                    tau,
                    fired,
                    Priority.A2,
                )
            )
    if cfg.drift_enabled and drift is not None:
        major = cfg.drift_bands.major
        out.append(
            ConditionEvaluation(
                "drift.major", f"{major:.2f} < drift score", drift.drift_score, major, drift.band is DriftBand.MAJOR, Priority.A3
            )
        )
    return out


def pms_alarm(
    released_on_drift: MetricSnapshot | None,
    refs: ReferenceState,
    drift: DriftReport | None,
    cfg: GovernanceConfig,
) -> tuple[bool, tuple[str, ...], list[ConditionEvaluation]]:
    evals = alarm_conditions(released_on_drift, refs, drift, cfg)
    triggers = tuple(sorted({e.priority.value for e in evals if e.outcome}))
    return bool(triggers), triggers, evals


def required_actions(decision: Decision, alarm: bool) -> tuple[str, ...]:
    actions = list(REQUIRED_ACTIONS[decision])
    if alarm:
        actions += ALARM_ACTIONS
        if decision is Decision.REJECT:
            actions += CRITICAL_ACTIONS
    return tuple(actions)


def compose(
    iteration: int,
    decision: Decision,
    routing_trace: Sequence[RouteStep],
    deployment_evals: Sequence[ConditionEvaluation],
    alarm_evals: Sequence[ConditionEvaluation],
    artifacts: Mapping[str, Any],
    confidence: float | None = None,
    sink: Callable[[DecisionRecord], Any] | None = None,
) -> DecisionRecord:
    """Assemble the composite record; when ``sink`` is given it must accept the record first."""
    triggers = tuple(sorted({e.priority.value for e in alarm_evals if e.outcome}))
    alarm = bool(triggers)
    reasons = [e.description for e in deployment_evals if e.outcome]
    reasons += [e.description for e in alarm_evals if e.outcome]
    if not reasons:
        reasons = ["All satisfied"]
    logged = dict(artifacts)
    logged["conditions"] = [e.to_dict() for e in (*deployment_evals, *alarm_evals)]
    record = DecisionRecord(
        iteration=iteration,
        deployment_decision=decision,
        alarm=alarm,
        alarm_triggers=triggers,
        trigger_reasons=tuple(reasons),
        required_actions=required_actions(decision, alarm),
        routing_trace=tuple(routing_trace),
        logged_artifacts=logged,
        confidence=confidence,
    )
    if sink is not None:
        try:
            sink(record)
        except Exception as exc:
            raise IntegrityError(f"decision for iteration {iteration} not issued: audit append failed ({exc})") from exc
    return record


def initial_references(cfg: GovernanceConfig) -> ReferenceState:
    if cfg.p_ref:
        return ReferenceState(p_ref=MetricSnapshot(extra=dict(cfg.p_ref)), p_ref_preset=True)
    return ReferenceState()


def update_references(
    refs: ReferenceState,
    record: DecisionRecord,
    candidate_golden: MetricSnapshot,
    candidate_drift: MetricSnapshot | None = None,
) -> ReferenceState:
    """Advance the reference state after a finalised decision.

    The fixed reference is set at the first APPROVE (unless preset by config)
    and never again; the released references move only on APPROVE.
    """
    new = refs
    if candidate_drift is not None:
        new = replace(new, previous_drift=candidate_drift)
    if record.deployment_decision is not Decision.APPROVE:
        return new
    return replace(
        new,
        p_ref=new.p_ref if new.p_ref is not None else candidate_golden,
        p_rel_golden=candidate_golden,
        p_rel_drift=candidate_drift if candidate_drift is not None else new.p_rel_drift,
        last_approved_iteration=record.iteration,
    )


def decision_artifacts(
    cfg: GovernanceConfig,
    candidate_golden: MetricSnapshot,
    candidate_drift: MetricSnapshot | None,
    released_on_drift: MetricSnapshot | None,
    drift: DriftReport | None,
    refs: ReferenceState,
    tai_score: float | None,
    extra: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    art: dict[str, Any] = {
        "config_name": cfg.name,
        "config_hash": cfg.config_hash(),
        "candidate_golden": candidate_golden.to_dict(),
        "candidate_drift": None if candidate_drift is None else candidate_drift.to_dict(),
        "released_on_drift": None if released_on_drift is None else released_on_drift.to_dict(),
        "dataset_fingerprints": {
            "golden": candidate_golden.dataset_fingerprint,
            "drifting": None if candidate_drift is None else candidate_drift.dataset_fingerprint,
        },
        "drift": None if drift is None else drift.to_dict(),
        "references": refs.to_dict(),
        "tai_score": tai_score,
        "tai_note": TAI_GAP_NOTE,
        "hazard_trace": dict(cfg.hazard_trace),
    }
    if extra:
        art.update(extra)
    return art


def decide(
    iteration: int,
    cfg: GovernanceConfig,
    refs: ReferenceState,
    candidate_golden: MetricSnapshot,
    candidate_drift: MetricSnapshot | None,
    released_on_drift: MetricSnapshot | None,
    drift: DriftReport | None,
    tai_score: float | None = None,
    confidence: float | None = None,
    sink: Callable[[DecisionRecord], Any] | None = None,
    extra_artifacts: Mapping[str, Any] | None = None,
) -> tuple[DecisionRecord, ReferenceState]:
    """One full CDM step: both channels, composition, reference update."""
    evals = evaluate_conditions(candidate_golden, candidate_drift, drift, tai_score, refs, cfg)
    decision, trace = deployment_decision(evals, cfg)
    _, _, alarm_evals = pms_alarm(released_on_drift, refs, drift, cfg)
    art = decision_artifacts(cfg, candidate_golden, candidate_drift, released_on_drift, drift, refs, tai_score, extra_artifacts)
    record = compose(iteration, decision, trace, evals, alarm_evals, art, confidence, sink)
    return record, update_references(refs, record, candidate_golden, candidate_drift)

