"""Brute-force reference implementations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def ecdf_sweep_d(a, b) -> float:
    """Largest ECDF gap, evaluated at every pooled value."""
    a, b = list(a), list(b)
    best = 0.0
    for x in set(a) | set(b):
        fa = sum(v <= x for v in a) / len(a)
        fb = sum(v <= x for v in b) / len(b)
        best = max(best, abs(fa - fb))
    return best


def permutation_p(a, b) -> float:
    """P(D >= D_obs) over every relabelling of the pooled sample into groups of the same sizes."""
    n_a, n_b = len(a), len(b)
    pooled = np.sort(np.concatenate([np.asarray(a, float), np.asarray(b, float)]))
    n = n_a + n_b
    ends = np.r_[np.flatnonzero(pooled[1:] != pooled[:-1]), n - 1]
    combos = np.array(list(itertools.combinations(range(n), n_a)))
    member = np.zeros((len(combos), n), dtype=np.int64)
    np.put_along_axis(member, combos, 1, axis=1)
    ca = np.cumsum(member, axis=1)[:, ends]
    cb = (ends + 1)[None, :] - ca
    scaled = np.max(np.abs(ca * n_b - cb * n_a), axis=1)
    obs_a = np.searchsorted(np.sort(a), pooled[ends], side="right")
    obs_b = np.searchsorted(np.sort(b), pooled[ends], side="right")
    d_obs = np.max(np.abs(obs_a * n_b - obs_b * n_a))
    return float(np.count_nonzero(scaled >= d_obs) / len(combos))
