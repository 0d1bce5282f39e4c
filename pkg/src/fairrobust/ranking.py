"""Scott-Knott clustering of treatment means into ranked groups."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from scipy import stats


def _split_stat(means: np.ndarray, mse_of_mean: float, dof: int) -> tuple[float, int]:
    """(lambda, best cut) for an ordered vector of treatment means."""
    k = len(means)
    total = means.sum()
    best, cut = -1.0, 1
    for i in range(1, k):
        t1, t2 = means[:i].sum(), means[i:].sum()
        b = t1 * t1 / i + t2 * t2 / (k - i) - total * total / k
        if b > best + 1e-12:
            best, cut = b, i
    dev = float(((means - means.mean()) ** 2).sum())
    sigma2 = (dev + dof * mse_of_mean) / (k + dof)
    if sigma2 <= 0:
        return (math.inf if best > 1e-12 else 0.0), cut
    return math.pi / (2 * (math.pi - 2)) * best / sigma2, cut


def scott_knott(groups: Mapping[str, Sequence[float]], alpha: float = 0.05,
                higher_is_better: bool = True) -> dict[str, int]:
    """Rank groups (1 = best) by recursively splitting the ordered means.

    A split is kept when ``lambda = pi / (2 (pi - 2)) * B0 / sigma0^2``
    exceeds the chi-square quantile with ``k / (pi - 2)`` degrees of freedom.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not groups:
        return {}
    data = {name: np.asarray(v, float) for name, v in groups.items()}
    for name, v in data.items():
        if len(v) < 2:
            raise ValueError(f"group {name!r} needs at least 2 measurements")
    sign = -1.0 if higher_is_better else 1.0
    names = sorted(data, key=lambda g: (sign * data[g].mean(), g))
    means = np.array([data[g].mean() for g in names])
    dof = int(sum(len(v) - 1 for v in data.values()))
    pooled = sum(float(((v - v.mean()) ** 2).sum()) for v in data.values()) / max(dof, 1)
    reps = len(data) / sum(1.0 / len(v) for v in data.values())   # harmonic mean size
    mse_of_mean = pooled / reps

    clusters: list[list[str]] = []

    def recurse(lo: int, hi: int) -> None:
        k = hi - lo
        if k > 1:
            lam, cut = _split_stat(means[lo:hi], mse_of_mean, dof)
            crit = stats.chi2.ppf(1 - alpha, k / (math.pi - 2))
            if lam > crit:
                recurse(lo, lo + cut)
                recurse(lo + cut, hi)
                return
        clusters.append(names[lo:hi])

    recurse(0, len(names))
    return {g: rank for rank, members in enumerate(clusters, start=1) for g in members}


__all__ = ["scott_knott"]
