"""Per-feature two-sample KS testing, Bonferroni drift scoring, and subgroup bias."""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError, EmptyDatasetError, SchemaError
from .metrics import binary_metrics, confusion_counts
from .records import PredictionRecord

log = logging.getLogger(__name__)

# Above this n_a * n_b the lattice count is replaced by the asymptotic series.
EXACT_SIZE_LIMIT = 10_000


class DriftBand(str, enum.Enum):
    NONE = "NONE"
    MINOR = "MINOR"
    MAJOR = "MAJOR"


@dataclass(frozen=True)
class DriftBands:
    minor: tuple[float, float] = (0.30, 0.70)
    major: float = 0.90

    def __post_init__(self) -> None:
        lo, hi = self.minor
        if not 0.0 <= lo <= hi <= 1.0:
            raise DomainError(f"minor drift interval must satisfy 0 <= lo <= hi <= 1, got {self.minor}")
        if not 0.0 <= self.major <= 1.0:
            raise DomainError(f"major drift bound must lie in [0, 1], got {self.major}")


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n_a: int
    n_b: int
    method: str = "asymptotic"


@dataclass(frozen=True)
class FeatureDrift:
    feature_index: int
    ks: KsResult
    significant: bool


@dataclass(frozen=True)
class DriftReport:
    per_feature: tuple[FeatureDrift, ...]
    alpha: float
    k_features: int
    drift_score: float
    band: DriftBand

    @property
    def n_significant(self) -> int:
        return sum(f.significant for f in self.per_feature)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "k_features": self.k_features,
            "drift_score": self.drift_score,
            "band": self.band.value,
            "per_feature": [
                {
                    "feature_index": f.feature_index,
                    "statistic": f.ks.statistic,
                    "p_value": f.ks.p_value,
                    "n_a": f.ks.n_a,
                    "n_b": f.ks.n_b,
                    "method": f.ks.method,
                    "significant": f.significant,
                }
                for f in self.per_feature
            ],
        }

    @classmethod
    def from_score(cls, score: float, bands: DriftBands, k_features: int = 0, alpha: float = 0.05) -> "DriftReport":
        """A report carrying only an aggregate score, as used by table replay."""
        return cls((), alpha, k_features, float(score), classify_drift(score, bands))


def kolmogorov_q(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(lambda)."""
    if lam <= 0:
        return 1.0
    total = 0.0
    j = 1
    while True:
        term = 2.0 * (-1) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-10:
            break
        j += 1
    return min(1.0, max(0.0, total))


def _asymptotic_p(d: float, n_a: int, n_b: int) -> float:
    ne = n_a * n_b / (n_a + n_b)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d
    return kolmogorov_q(lam)


def _ecdf_gaps(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pooled = np.unique(np.concatenate([a, b]))
    ca = np.searchsorted(np.sort(a), pooled, side="right")
    cb = np.searchsorted(np.sort(b), pooled, side="right")
    return pooled, ca, cb


def _exact_p(a: np.ndarray, b: np.ndarray) -> float:
    """Permutation p-value P(D >= D_obs) conditional on the pooled values.

    Counts monotone lattice paths (one step per pooled observation) whose
    scaled gap |i*n_b - j*n_a| stays below the observed maximum at every
    tie-block boundary.
    """
    n_a, n_b = len(a), len(b)
    pooled = np.sort(np.concatenate([a, b]))
    boundary = np.r_[pooled[1:] != pooled[:-1], True]
    _, ca, cb = _ecdf_gaps(a, b)
    d_obs = int(np.max(np.abs(ca * n_b - cb * n_a)))
    if d_obs == 0:
        return 1.0
    # paths[i] = number of ways to reach (i, step - i) without leaving the band
    paths = [1] + [0] * n_a
    for step in range(1, n_a + n_b + 1):
        nxt = [0] * (n_a + 1)
        lo = max(0, step - n_b)
        hi = min(n_a, step)
        for i in range(lo, hi + 1):
            j = step - i
            ways = (paths[i - 1] if i > 0 else 0) + (paths[i] if j > 0 else 0)
            if ways and boundary[step - 1] and abs(i * n_b - j * n_a) >= d_obs:
                ways = 0
            nxt[i] = ways
        paths = nxt
    inside = paths[n_a]
    total = math.comb(n_a + n_b, n_a)
    return float(Fraction(total - inside, total))


def ks_two_sample(a: Sequence[float], b: Sequence[float], method: str = "auto") -> KsResult:
    """Two-sample Kolmogorov-Smirnov test.

    ``method`` is ``"exact"``, ``"asymptotic"`` or ``"auto"`` (exact when
    ``n_a * n_b <= EXACT_SIZE_LIMIT``).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptyDatasetError("KS test needs two non-empty samples")
    n_a, n_b = a.size, b.size
    _, ca, cb = _ecdf_gaps(a, b)
    d = float(np.max(np.abs(ca / n_a - cb / n_b)))
    if method == "auto":
        method = "exact" if n_a * n_b <= EXACT_SIZE_LIMIT else "asymptotic"
    if method == "exact":
        p = _exact_p(a, b)
    elif method == "asymptotic":
        p = _asymptotic_p(d, n_a, n_b)
    else:
        raise DomainError(f"unknown KS method {method!r}")
    return KsResult(statistic=d, p_value=min(1.0, max(0.0, p)), n_a=n_a, n_b=n_b, method=method)


def classify_drift(score: float, bands: DriftBands) -> DriftBand:
    if not 0.0 <= score <= 1.0:
        raise DomainError(f"drift score must lie in [0, 1], got {score}")
    if score > bands.major:
        return DriftBand.MAJOR
    lo, hi = bands.minor
    if lo <= score <= hi:
        return DriftBand.MINOR
    return DriftBand.NONE


def drift_report(
    reference: np.ndarray,
    incoming: np.ndarray,
    alpha: float = 0.05,
    bands: DriftBands = DriftBands(),
    feature_indices: Sequence[int] | None = None,
    method: str = "auto",
) -> DriftReport:
    """KS-test every column; a feature is significant iff p < alpha / K."""
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    incoming = np.atleast_2d(np.asarray(incoming, dtype=float))
    if reference.shape[1] != incoming.shape[1]:
        raise SchemaError(
            f"column-count mismatch: reference has {reference.shape[1]}, incoming has {incoming.shape[1]}"
        )
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    k = reference.shape[1]
    if k == 0:
        raise SchemaError("no features to test")
    indices = list(feature_indices) if feature_indices is not None else list(range(k))
    cutoff = alpha / k
    per_feature = []
    for col, idx in enumerate(indices):
        res = ks_two_sample(reference[:, col], incoming[:, col], method=method)
        per_feature.append(FeatureDrift(idx, res, res.p_value < cutoff))
    score = sum(f.significant for f in per_feature) / k
    return DriftReport(tuple(per_feature), alpha, k, score, classify_drift(score, bands))


@dataclass(frozen=True)
class BiasReport:
    per_group: tuple[tuple[str, float | None, float | None], ...]
    bias_score: float
    excluded: tuple[str, ...] = ()


def bias_score(records: Sequence[PredictionRecord], threshold: float) -> BiasReport:
    """Largest pairwise sensitivity gap across subgroups."""
    groups: dict[str, list[PredictionRecord]] = {}
    for r in records:
        groups.setdefault(r.subgroup, []).append(r)
    if len(groups) < 2:
        raise DomainError("bias score needs at least two subgroups")
    per_group = []
    usable: dict[str, float] = {}
    excluded = []
    for tag in sorted(groups):
        m = binary_metrics(confusion_counts(groups[tag], threshold))
        per_group.append((tag, m["sensitivity"], m["specificity"]))
        if m["sensitivity"] is None:
            excluded.append(tag)
            log.warning("subgroup %r has no positives; excluded from bias score", tag)
        else:
            usable[tag] = m["sensitivity"]
    gaps = [abs(usable[x] - usable[y]) for x, y in itertools.combinations(usable, 2)]
    return BiasReport(tuple(per_group), max(gaps) if gaps else 0.0, tuple(excluded))
