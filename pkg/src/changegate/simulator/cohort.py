"""Synthetic cohorts, seeded perturbations and the keyed score model."""

from __future__ import annotations

import zlib
from dataclasses import replace
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from ..darm import keyed_unit
from ..errors import DomainError
from ..records import PredictionRecord
from .scenarios import CohortSpec, ScenarioKind, ScenarioSpec, ScoreModel

_STD_NORMAL = NormalDist()
_EPS = 1e-12


def _rng(seed: int, *tags: str) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, *(zlib.crc32(t.encode()) for t in tags)])


def _z(seed: int, purpose: str, patient_id: str) -> float:
    u = min(max(keyed_unit(seed, purpose, patient_id), _EPS), 1 - _EPS)
    return _STD_NORMAL.inv_cdf(u)


def patient_score(patient_id: str, true_label: int, model: ScoreModel, seed: int, model_key: int) -> float:
    """Score of one patient under one model.

    The patient's latent position ``z`` is shared by every model (keyed on
    ``seed``); the jitter term is specific to ``model_key``.
    """
    mean = model.pos_mean if true_label == 1 else model.neg_mean
    s = mean + model.sd * _z(seed, "score", patient_id)
    if model.jitter_sd:
        s += model.jitter_sd * _z(model_key, "jitter", patient_id)
    return min(1.0, max(0.0, s))


def score_records(
    records: Sequence[PredictionRecord],
    model: ScoreModel,
    seed: int,
    model_key: int,
    truth: Mapping[str, int] | None = None,
) -> list[PredictionRecord]:
    """Rescore records; ``truth`` supplies the latent label when observed labels were flipped."""
    out = []
    for r in records:
        y = r.label if truth is None else truth.get(r.patient_id, r.label)
        out.append(r.with_score(patient_score(r.patient_id, y, model, seed, model_key)))
    return out


def _site_features(spec: CohortSpec, labels: np.ndarray, site: str, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((len(labels), spec.n_features)) + spec.class_shift * labels[:, None]
    m, offset = spec.site_shift.get(site, (0, 0.0))
    if m:
        x[:, :m] += offset
    return x


def generate_cohort(
    spec: CohortSpec,
    n: int,
    seed: int,
    site: str = "A",
    prefix: str = "P",
) -> list[PredictionRecord]:
    if n <= 0:
        raise DomainError("cohort size must be positive")
    rng = _rng(seed, "cohort", site, prefix)
    labels = (rng.random(n) < spec.prevalence).astype(int)
    feats = _site_features(spec, labels, site, rng)
    groups = rng.integers(0, len(spec.subgroups), size=n)
    out = []
    for i in range(n):
        pid = f"{prefix}{i:06d}"
        y = int(labels[i])
        out.append(
            PredictionRecord(
                patient_id=pid,
                label=y,
                score=patient_score(pid, y, spec.score_model, seed, 0),
                features=tuple(float(v) for v in feats[i]),
                subgroup=spec.subgroups[groups[i]],
                site=site,
            )
        )
    return out


def apply_perturbation(
    records: Sequence[PredictionRecord],
    scenario: ScenarioSpec,
    cohort: CohortSpec | None = None,
) -> list[PredictionRecord]:
    """Apply one scenario's transform; scores are left untouched."""
    kind = scenario.kind
    if kind in (ScenarioKind.STATIONARY, ScenarioKind.RECOVERY, ScenarioKind.REGRESSION_PROBE):
        return list(records)
    if not records:
        return []
    cohort = cohort or CohortSpec()
    p = scenario.params
    rng = _rng(scenario.seed, "perturb", kind.value)
    x = np.asarray([r.features for r in records], dtype=float)
    labels = np.asarray([r.label for r in records], dtype=int)
    sites = [r.site for r in records]

    if kind is ScenarioKind.CROSS_SITE_MIX:
        n_mix = round(p["mix_fraction"] * len(records))
        chosen = rng.choice(len(records), size=n_mix, replace=False)
        x[chosen] = _site_features(cohort, labels[chosen], "B", rng)
        for i in chosen:
            sites[i] = "B"
    elif kind is ScenarioKind.EXTREME_SHIFT:
        std = x.std(axis=0)
        x = x * p["scale_factor"] + p["offset_sigmas"] * std
    elif kind is ScenarioKind.CATASTROPHIC:
        std = x.std(axis=0)
        u = rng.random(len(records))
        flip = np.where(labels == 1, u < p["pos_flip_rate"], u < p["neg_flip_rate"])
        labels = np.where(flip, 1 - labels, labels)
        x = x + rng.standard_normal(x.shape) * (p["noise_sigma_multiplier"] * std)
    else:  # pragma: no cover
        raise DomainError(f"unhandled scenario {kind}")

    return [
        replace(r, label=int(labels[i]), features=tuple(float(v) for v in x[i]), site=sites[i])
        for i, r in enumerate(records)
    ]
