from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from changegate.config import IllustrativeThresholdWarning, load_profile
from changegate.records import PredictionRecord

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_ACCEPTANCE: dict[int, str] = {}


def make_records(labels, scores, prefix: str = "R", features=None, subgroups=None) -> list[PredictionRecord]:
    out = []
    for i, (y, s) in enumerate(zip(labels, scores)):
        out.append(
            PredictionRecord(
                patient_id=f"{prefix}{i:05d}",
                label=int(y),
                score=float(s),
                features=() if features is None else tuple(float(v) for v in features[i]),
                subgroup="" if subgroups is None else subgroups[i],
            )
        )
    return out


def random_records(rng: np.random.Generator, n: int, prefix: str = "R", levels: int | None = None):
    labels = rng.integers(0, 2, size=n)
    scores = rng.random(n)
    if levels:
        scores = np.round(scores * levels) / levels
    return make_records(labels, scores, prefix)


@pytest.fixture(scope="session")
def sepsis_cfg():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllustrativeThresholdWarning)
        return load_profile("sepsis")


@pytest.fixture(scope="session")
def segmentation_cfg():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllustrativeThresholdWarning)
        return load_profile("segmentation")


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
