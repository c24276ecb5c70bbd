"""Governance configuration: every change-control parameter, loaded from YAML.

Schema (all keys optional unless marked):

.. code-block:: yaml

    name: sepsis                       # required
    rule_profile: SEPSIS_STYLE         # or SEGMENTATION_STYLE
    primary_metric: sensitivity        # metric behind P_cur / P_ref comparisons
    alarm_metric: sensitivity          # metric behind the A1/A2 alarms
    active_categories: [REJECT, CLINICAL_REVIEW, CONDITIONAL_APPROVAL, APPROVE]
    p_fail: {sensitivity: 0.65}        # deployment floors (REJECT)
    p_pms: {sensitivity: 0.65}         # field floors (ALARM A1); defaults to p_fail
    safety_ceilings: {fnr: 0.35}       # metric must stay <= ceiling (REJECT)
    buffer_zone: {sensitivity: [0.66, null]}   # acceptable closed range (CLINICAL REVIEW)
    ref_tolerance: {sensitivity: 0.015}        # regression margin vs fixed reference
    tau: {sensitivity: 0.025}                  # released-model regression margin (A2)
    p_ref: {dsc: 0.726}                # optional preset fixed reference
    drift: {enabled: true, alpha: 0.05, minor: [0.30, 0.70], major: 0.90,
            monitored_features: null}
    tai_threshold: null
    delta_ci: 0.02
    bootstrap_B: 200
    mlcps_weights: {sensitivity: 1.5, roc_auc: 1.3, balanced_accuracy: 1.1, specificity: 1.0}
    target_sensitivity: 0.75
    hazard_trace: {p_fail.sensitivity: HAZ-01, ...}
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .categories import Decision, RuleProfile
from .drift import DriftBands
from .errors import ConfigError, DomainError
from .metrics import MlcpsWeights

ILLUSTRATIVE = "illustrative"


class IllustrativeThresholdWarning(UserWarning):
    """A threshold has no hazard-analysis trace and is therefore illustrative only."""


@dataclass(frozen=True)
class GovernanceConfig:
    name: str
    rule_profile: RuleProfile = RuleProfile.SEPSIS_STYLE
    primary_metric: str = "sensitivity"
    alarm_metric: str = "sensitivity"
    active_categories: frozenset[Decision] = frozenset(Decision)
    p_fail: Mapping[str, float] = field(default_factory=dict)
    p_pms: Mapping[str, float] = field(default_factory=dict)
    safety_ceilings: Mapping[str, float] = field(default_factory=dict)
    buffer_zone: Mapping[str, tuple[float | None, float | None]] = field(default_factory=dict)
    ref_tolerance: Mapping[str, float] = field(default_factory=dict)
    tau: Mapping[str, float] = field(default_factory=dict)
    p_ref: Mapping[str, float] | None = None
    drift_enabled: bool = True
    drift_bands: DriftBands = DriftBands()
    alpha: float = 0.05
    monitored_features: tuple[int, ...] | None = None
    tai_threshold: float | None = None
    delta_ci: float = 0.02
    bootstrap_B: int = 200
    mlcps_weights: MlcpsWeights | None = None
    target_sensitivity: float = 0.75
    hazard_trace: Mapping[str, str] = field(default_factory=dict)
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def effective_p_pms(self) -> Mapping[str, float]:
        return self.p_pms or self.p_fail

    def threshold_keys(self) -> list[str]:
        keys = [f"p_fail.{m}" for m in self.p_fail]
        keys += [f"p_pms.{m}" for m in self.p_pms]
        keys += [f"safety_ceilings.{m}" for m in self.safety_ceilings]
        keys += [f"buffer_zone.{m}" for m in self.buffer_zone]
        keys += [f"ref_tolerance.{m}" for m in self.ref_tolerance]
        keys += [f"tau.{m}" for m in self.tau]
        if self.drift_enabled:
            keys += ["drift.minor", "drift.major"]
        if self.tai_threshold is not None:
            keys.append("tai_threshold")
        keys.append("delta_ci")
        return keys

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode("utf-8")).hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _metric_map(raw: Any, path: str) -> dict[str, float]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ConfigError(path, "expected a mapping of metric -> number")
    out = {}
    for k, v in raw.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{k}", f"expected a number, got {v!r}")
        out[str(k)] = float(v)
    return out


def _unit(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ConfigError(path, f"must lie in [0, 1], got {value}")
    return float(value)


def config_from_mapping(raw: Mapping[str, Any]) -> GovernanceConfig:
    """Validate a parsed config document; raises ConfigError naming the bad field."""
    if not isinstance(raw, Mapping):
        raise ConfigError("", "config document must be a mapping")
    if not raw.get("name"):
        raise ConfigError("name", "required")

    try:
        profile = RuleProfile(raw.get("rule_profile", "SEPSIS_STYLE"))
    except ValueError:
        raise ConfigError("rule_profile", f"unknown profile {raw.get('rule_profile')!r}") from None

    cats_raw = raw.get("active_categories", [d.value for d in Decision])
    try:
        cats = frozenset(Decision(c) for c in cats_raw)
    except (ValueError, TypeError):
        raise ConfigError("active_categories", f"unknown category in {cats_raw!r}") from None
    if Decision.REJECT not in cats or Decision.APPROVE not in cats:
        raise ConfigError("active_categories", "REJECT and APPROVE must always be active")

    p_fail = _metric_map(raw.get("p_fail"), "p_fail")
    p_pms = _metric_map(raw.get("p_pms"), "p_pms") or dict(p_fail)
    ceilings = _metric_map(raw.get("safety_ceilings"), "safety_ceilings")
    ref_tol = _metric_map(raw.get("ref_tolerance"), "ref_tolerance")
    tau = _metric_map(raw.get("tau"), "tau")
    for name, mapping in (("ref_tolerance", ref_tol), ("tau", tau)):
        for k, v in mapping.items():
            if v < 0:
                raise ConfigError(f"{name}.{k}", "tolerances must be non-negative")
    p_ref = _metric_map(raw.get("p_ref"), "p_ref") or None

    buffer: dict[str, tuple[float | None, float | None]] = {}
    for k, v in (raw.get("buffer_zone") or {}).items():
        path = f"buffer_zone.{k}"
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            lo, hi = float(v), None
        elif isinstance(v, (list, tuple)) and len(v) == 2:
            lo = None if v[0] is None else _unit(v[0], path + "[0]")
            hi = None if v[1] is None else _unit(v[1], path + "[1]")
        else:
            raise ConfigError(path, "expected a floor or a [lo, hi] pair")
        if lo is not None and hi is not None and hi < lo:
            raise ConfigError(path, f"inverted range [{lo}, {hi}]")
        buffer[str(k)] = (lo, hi)

    drift = raw.get("drift") or {}
    if not isinstance(drift, Mapping):
        raise ConfigError("drift", "expected a mapping")
    minor = drift.get("minor", [0.30, 0.70])
    if not isinstance(minor, (list, tuple)) or len(minor) != 2:
        raise ConfigError("drift.minor", "expected [lo, hi]")
    lo, hi = _unit(minor[0], "drift.minor[0]"), _unit(minor[1], "drift.minor[1]")
    if hi < lo:
        raise ConfigError("drift.minor", f"inverted interval [{lo}, {hi}]")
    major = _unit(drift.get("major", 0.90), "drift.major")
    alpha = drift.get("alpha", 0.05)
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
        raise ConfigError("drift.alpha", f"must lie in (0, 1), got {alpha!r}")
    monitored = drift.get("monitored_features")
    if monitored is not None:
        if not isinstance(monitored, list) or not all(isinstance(i, int) and i >= 0 for i in monitored):
            raise ConfigError("drift.monitored_features", "expected a list of non-negative column indices")
        monitored = tuple(monitored)

    tai = raw.get("tai_threshold")
    if tai is not None:
        tai = _unit(tai, "tai_threshold")
    delta = raw.get("delta_ci", 0.02)
    if isinstance(delta, bool) or not isinstance(delta, (int, float)) or delta <= 0:
        raise ConfigError("delta_ci", "must be a positive number")
    b = raw.get("bootstrap_B", 200)
    if isinstance(b, bool) or not isinstance(b, int) or b < 1:
        raise ConfigError("bootstrap_B", "must be a positive integer")
    target = _unit(raw.get("target_sensitivity", 0.75), "target_sensitivity")

    weights = None
    if raw.get("mlcps_weights"):
        try:
            weights = MlcpsWeights.from_mapping(raw["mlcps_weights"])
        except DomainError as exc:
            raise ConfigError("mlcps_weights", str(exc)) from None

    hazard = raw.get("hazard_trace") or {}
    if not isinstance(hazard, Mapping):
        raise ConfigError("hazard_trace", "expected a mapping of threshold key -> hazard id")

    cfg = GovernanceConfig(
        name=str(raw["name"]),
        rule_profile=profile,
        primary_metric=str(raw.get("primary_metric", "sensitivity")),
        alarm_metric=str(raw.get("alarm_metric", raw.get("primary_metric", "sensitivity"))),
        active_categories=cats,
        p_fail=p_fail,
        p_pms=p_pms,
        safety_ceilings=ceilings,
        buffer_zone=buffer,
        ref_tolerance=ref_tol,
        tau=tau,
        p_ref=p_ref,
        drift_enabled=bool(drift.get("enabled", True)),
        drift_bands=DriftBands((lo, hi), major),
        alpha=float(alpha),
        monitored_features=monitored,
        tai_threshold=tai,
        delta_ci=float(delta),
        bootstrap_B=b,
        mlcps_weights=weights,
        target_sensitivity=target,
        hazard_trace={str(k): str(v) for k, v in hazard.items()},
        raw=json.loads(canonical_json(dict(raw))),
    )

    trace = dict(cfg.hazard_trace)
    missing = [k for k in cfg.threshold_keys() if k not in trace]
    for key in missing:
        trace[key] = ILLUSTRATIVE
        warnings.warn(
            f"{cfg.name}: threshold {key} has no hazard trace; treated as {ILLUSTRATIVE}",
            IllustrativeThresholdWarning,
            stacklevel=2,
        )
    object.__setattr__(cfg, "hazard_trace", trace)
    return cfg


def load_config(path: str | Path) -> GovernanceConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} does not parse: {exc}") from None
    return config_from_mapping(raw)


PROFILES = ("sepsis", "segmentation")


def profile_path(name: str) -> Path:
    if name not in PROFILES:
        raise ConfigError("", f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    return Path(str(resources.files("changegate") / "profiles" / f"{name}.yaml"))


def load_profile(name: str) -> GovernanceConfig:
    """Load one of the shipped profiles (``sepsis`` or ``segmentation``)."""
    return load_config(profile_path(name))
