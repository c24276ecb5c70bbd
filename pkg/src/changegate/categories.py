"""Decision categories, priorities and rule profiles."""

from __future__ import annotations

import enum


class Decision(str, enum.Enum):
    REJECT = "REJECT"
    CLINICAL_REVIEW = "CLINICAL_REVIEW"
    CONDITIONAL_APPROVAL = "CONDITIONAL_APPROVAL"
    APPROVE = "APPROVE"

    @property
    def rank(self) -> int:
        """0 is the most conservative; higher is more permissive."""
        return _RANK[self]

    @property
    def short(self) -> str:
        return _SHORT[self]


_RANK = {Decision.REJECT: 0, Decision.CLINICAL_REVIEW: 1, Decision.CONDITIONAL_APPROVAL: 2, Decision.APPROVE: 3}
_SHORT = {
    Decision.REJECT: "REJ.",
    Decision.CLINICAL_REVIEW: "CLIN. REV.",
    Decision.CONDITIONAL_APPROVAL: "COND. APPR.",
    Decision.APPROVE: "APPR.",
}


class Priority(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"


DEPLOYMENT_PRIORITIES = (Priority.P1, Priority.P2, Priority.P3)
PRIORITY_DECISION = {
    Priority.P1: Decision.REJECT,
    Priority.P2: Decision.CLINICAL_REVIEW,
    Priority.P3: Decision.CONDITIONAL_APPROVAL,
    Priority.P4: Decision.APPROVE,
}
DECISION_PRIORITY = {v: k for k, v in PRIORITY_DECISION.items()}


class RuleProfile(str, enum.Enum):
    SEPSIS_STYLE = "SEPSIS_STYLE"
    SEGMENTATION_STYLE = "SEGMENTATION_STYLE"
