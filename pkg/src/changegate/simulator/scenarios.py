"""Scenario, cohort and lifecycle-plan definitions, loadable from YAML."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..config import GovernanceConfig, load_config, load_profile, PROFILES
from ..errors import ConfigError


class ScenarioKind(str, enum.Enum):
    STATIONARY = "STATIONARY"
    CROSS_SITE_MIX = "CROSS_SITE_MIX"
    REGRESSION_PROBE = "REGRESSION_PROBE"
    EXTREME_SHIFT = "EXTREME_SHIFT"
    RECOVERY = "RECOVERY"
    CATASTROPHIC = "CATASTROPHIC"


_REQUIRED = {
    ScenarioKind.CROSS_SITE_MIX: ("mix_fraction",),
    ScenarioKind.EXTREME_SHIFT: ("scale_factor", "offset_sigmas"),
    ScenarioKind.CATASTROPHIC: ("pos_flip_rate", "neg_flip_rate", "noise_sigma_multiplier"),
}
_RATES = ("mix_fraction", "pos_flip_rate", "neg_flip_rate")


@dataclass(frozen=True)
class ScoreModel:
    """Per-class Gaussian scores keyed on the true label, clamped to [0, 1].

    ``jitter_sd`` adds a small model-specific term so that retrained
    candidates differ slightly from each other on the same patients.
    """

    pos_mean: float = 0.60
    neg_mean: float = 0.33
    sd: float = 0.12
    jitter_sd: float = 0.005

    def __post_init__(self) -> None:
        if self.sd <= 0 or self.jitter_sd < 0:
            raise ConfigError("score_model", "sd must be positive and jitter_sd non-negative")

    @classmethod
    def from_mapping(cls, d: Mapping[str, Any] | None, base: "ScoreModel | None" = None) -> "ScoreModel":
        base = base or cls()
        if not d:
            return base
        unknown = set(d) - {"pos_mean", "neg_mean", "sd", "jitter_sd"}
        if unknown:
            raise ConfigError("score_model", f"unknown keys {sorted(unknown)}")
        return cls(**{**base.__dict__, **{k: float(v) for k, v in d.items()}})


@dataclass(frozen=True)
class CohortSpec:
    n_features: int = 34
    prevalence: float = 0.088
    class_shift: float = 0.3
    # site -> (number of leading features shifted, offset in feature sds)
    site_shift: Mapping[str, tuple[int, float]] = field(default_factory=lambda: {"B": (14, 0.5)})
    subgroups: tuple[str, ...] = ("F", "M")
    score_model: ScoreModel = ScoreModel()

    def __post_init__(self) -> None:
        if self.n_features < 1:
            raise ConfigError("cohort.n_features", "must be at least 1")
        if not 0.0 <= self.prevalence <= 1.0:
            raise ConfigError("cohort.prevalence", "must lie in [0, 1]")
        for site, (m, _) in self.site_shift.items():
            if not 0 <= m <= self.n_features:
                raise ConfigError(f"cohort.site_shift.{site}", "shifted feature count out of range")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    n_records: int
    params: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    # Score model of the candidate retrained at this iteration; None keeps the cohort default.
    candidate: ScoreModel | None = None

    def __post_init__(self) -> None:
        if self.n_records <= 0:
            raise ConfigError("scenario.n_records", "must be positive")
        for key in _REQUIRED.get(self.kind, ()):
            if key not in self.params:
                raise ConfigError(f"scenario.params.{key}", f"required for {self.kind.value}")
        for key in _RATES:
            if key in self.params and not 0.0 <= self.params[key] <= 1.0:
                raise ConfigError(f"scenario.params.{key}", "rates must lie in [0, 1]")


@dataclass(frozen=True)
class LifecyclePlan:
    scenarios: tuple[tuple[int, ScenarioSpec], ...]
    config: GovernanceConfig
    cohort: CohortSpec = CohortSpec()
    n_initial: int = 20000
    golden_fraction: float = 0.10
    initial_training_fraction: float = 2 / 9
    seed: int = 0
    confidence_replicates: int = 0

    def __post_init__(self) -> None:
        indices = [i for i, _ in self.scenarios]
        if indices != list(range(1, len(indices) + 1)):
            raise ConfigError("iterations", f"iteration indices must run 1..N contiguously, got {indices}")


def _scenario(d: Mapping[str, Any], base: ScoreModel, path: str) -> ScenarioSpec:
    try:
        kind = ScenarioKind(d["kind"])
    except (KeyError, ValueError):
        raise ConfigError(f"{path}.kind", f"unknown scenario kind {d.get('kind')!r}") from None
    return ScenarioSpec(
        kind=kind,
        n_records=int(d.get("n_records", 0)),
        params={str(k): float(v) for k, v in (d.get("params") or {}).items()},
        seed=int(d.get("seed", 0)),
        candidate=ScoreModel.from_mapping(d["candidate"], base) if d.get("candidate") else None,
    )


def plan_from_mapping(raw: Mapping[str, Any], base_dir: Path | None = None, seed: int | None = None) -> LifecyclePlan:
    cfg_ref = raw.get("config", "sepsis")
    if isinstance(cfg_ref, str) and cfg_ref in PROFILES:
        cfg = load_profile(cfg_ref)
    else:
        p = Path(cfg_ref)
        cfg = load_config(p if p.is_absolute() or base_dir is None else base_dir / p)

    c = raw.get("cohort") or {}
    score = ScoreModel.from_mapping(c.get("score_model"))
    n_features = int(c.get("n_features", 34))
    default_shift = {"B": [min(14, n_features), 0.5]}
    shifts = {str(k): (int(v[0]), float(v[1])) for k, v in (c.get("site_shift") or default_shift).items()}
    cohort = CohortSpec(
        n_features=n_features,
        prevalence=float(c.get("prevalence", 0.088)),
        class_shift=float(c.get("class_shift", 0.3)),
        site_shift=shifts,
        subgroups=tuple(c.get("subgroups", ("F", "M"))),
        score_model=score,
    )
    items = raw.get("iterations") or []
    scenarios = tuple((int(it["iteration"]), _scenario(it, score, f"iterations[{n}]")) for n, it in enumerate(items))
    return LifecyclePlan(
        scenarios=scenarios,
        config=cfg,
        cohort=cohort,
        n_initial=int(raw.get("n_initial", 20000)),
        golden_fraction=float(raw.get("golden_fraction", 0.10)),
        initial_training_fraction=float(raw.get("initial_training_fraction", 2 / 9)),
        seed=int(raw.get("seed", 0)) if seed is None else seed,
        confidence_replicates=int(raw.get("confidence_replicates", 0)),
    )


def load_plan(path: str | Path, seed: int | None = None) -> LifecyclePlan:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("", f"cannot load plan {path}: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError("", "plan document must be a mapping")
    return plan_from_mapping(raw, path.parent, seed)


def default_plan_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("changegate") / "simulator" / "plans" / "sepsis_default.yaml"))


def load_default_plan(seed: int | None = None) -> LifecyclePlan:
    return load_plan(default_plan_path(), seed)
