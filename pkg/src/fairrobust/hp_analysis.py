"""Hyperparameter exploration driven by EOD, Shapley importance, and ranking comparison."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .fairness import PERF_TOLERANCE, bias_fn
from .learners import (HP_SPACE, HpConfig, LearnerKind, ParamConfig, PerfMetrics, config_kind,
                       default_config, perf_within)

EXPLOIT = 0.8

Objective = Callable[[HpConfig], tuple[float, PerfMetrics]]


@dataclass(frozen=True)
class HpSample:
    config: HpConfig
    eod: float
    perf: PerfMetrics
    admitted: bool = False


def _valid(cfg: HpConfig, name: str, value) -> bool:
    try:
        replace(cfg, **{name: value})
    except ValueError:
        return False
    return True


def mutate(cfg: HpConfig, seed: int) -> HpConfig:
    """Change exactly one hyperparameter.

    Categorical values are resampled among the other valid values; numeric
    values are scaled by ``exp(N(0, 0.5))`` and clamped to their range.
    """
    rng = np.random.default_rng(seed)
    space = HP_SPACE[config_kind(cfg)]
    names = list(space)
    for _ in range(100):
        name = names[int(rng.integers(len(names)))]
        p = space[name]
        old = getattr(cfg, name)
        if p.kind == "cat":
            options = [v for v in p.values if v != old and _valid(cfg, name, v)]
            if not options:
                continue
            new = options[int(rng.integers(len(options)))]
        else:
            if old is None or old == 0:
                new = float(rng.uniform(p.low, p.high))
            else:
                new = float(old) * math.exp(rng.normal(0.0, 0.5))
            new = min(max(new, p.low), p.high)
            if p.kind == "int":
                new = int(round(new))
            if new == old:
                continue
        return replace(cfg, **{name: new})
    raise RuntimeError("no mutation changed the configuration")


def _default_objective(parts, kind: LearnerKind, seed: int) -> Objective:
    features = parts[0].schema.feature_names
    reference = bias_fn(parts, kind, ParamConfig(default_config(kind), features), seed).perf

    def run(cfg: HpConfig):
        res = bias_fn(parts, kind, ParamConfig(cfg, features), seed, reference=reference)
        return res.eod, res.perf
    return run


def evolve(parts: tuple[Dataset, Dataset, Dataset] | None, kind: LearnerKind, budget: int,
           seed: int, objective: Objective | None = None) -> list[HpSample]:
    """Mutation search toward low EOD; returns every evaluated configuration.

    The default configuration is the first sample and counts toward the
    budget.  A mutant joins the frontier when its EOD is below the lowest seen
    so far and its accuracy and F1 stay within tolerance of the default.
    Parents are usually the newest (lowest-EOD) frontier member; with
    probability ``1 - EXPLOIT`` a uniformly drawn older member is used instead.
    """
    if budget < 10:
        raise ValueError("budget must be at least 10")
    kind = LearnerKind(kind)
    if objective is None:
        if parts is None:
            raise ValueError("either data parts or an objective is required")
        objective = _default_objective(parts, kind, seed)
    rng = np.random.default_rng(seed)
    start = default_config(kind)
    eod0, perf0 = objective(start)
    samples = [HpSample(start, eod0, perf0, True)]
    frontier = [start]
    best = eod0
    while len(samples) < budget:
        if rng.random() < EXPLOIT:
            parent = frontier[-1]
        else:
            parent = frontier[int(rng.integers(len(frontier)))]
        child = mutate(parent, int(rng.integers(2 ** 63)))
        e, perf = objective(child)
        admitted = e < best and perf_within(perf0, perf, PERF_TOLERANCE)
        if admitted:
            frontier.append(child)
            best = e
        samples.append(HpSample(child, e, perf, admitted))
    return samples


def write_samples_csv(samples: Sequence[HpSample], path) -> None:
    if not samples:
        raise ValueError("no samples")
    hp_names = list(asdict(samples[0].config))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(hp_names + ["eod", "accuracy", "precision", "recall", "f1", "admitted"])
        for s in samples:
            cfg = asdict(s.config)
            w.writerow([cfg[h] for h in hp_names]
                       + [repr(s.eod), repr(s.perf.accuracy), repr(s.perf.precision),
                          repr(s.perf.recall), repr(s.perf.f1), int(s.admitted)])


# ---------------------------------------------------------------- importance

@dataclass(frozen=True)
class ImportanceVector:
    names: tuple[str, ...]
    importance: tuple[float, ...]
    r2: float
    flags: tuple[str, ...] = ()

    @property
    def ranking(self) -> tuple[str, ...]:
        pairs = sorted(zip(self.names, self.importance), key=lambda t: (-round(abs(t[1]), 12), t[0]))
        return tuple(n for n, _ in pairs)

    def top(self, k: int = 4) -> tuple[str, ...]:
        return self.ranking[:k]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.importance))


def encode_configs(configs: Sequence[HpConfig]) -> tuple[np.ndarray, list[str], list[list[int]]]:
    """Numeric design matrix: one-hot categoricals, log10 for log-scaled values.

    A value that may be unset gets an extra missing-indicator column in its group.
    """
    kind = config_kind(configs[0])
    cols, names, groups = [], [], []
    for name, p in HP_SPACE[kind].items():
        vals = [getattr(c, name) for c in configs]
        idx = []
        if p.kind == "cat":
            for level in p.values:
                idx.append(len(cols))
                cols.append([float(v == level) for v in vals])
        else:
            missing = [v is None for v in vals]
            mid = 0.5 * (p.low + p.high)
            raw = [mid if v is None else float(v) for v in vals]
            if p.kind == "log":
                raw = [math.log10(v) for v in raw]
            idx.append(len(cols))
            cols.append(raw)
            if any(missing):
                idx.append(len(cols))
                cols.append([float(m) for m in missing])
        names.append(name)
        groups.append(idx)
    return np.array(cols, float).T, names, groups


def shapley_values(X: np.ndarray, y: np.ndarray, groups: Sequence[Sequence[int]],
                   ridge: float = 1e-3) -> tuple[np.ndarray, float]:
    """Exact per-group Shapley values of a ridge surrogate, and its R^2.

    The value of a coalition is the surrogate's prediction with the absent
    groups marginalized over the sample set; for a linear surrogate this
    equals evaluating at the column means.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    m, M = len(y), len(groups)
    if M > 12:
        raise ValueError("exact enumeration supports at most 12 groups")
    mu = X.mean(0)
    sd = X.std(0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd
    yc = y - y.mean()
    beta = np.linalg.solve(Z.T @ Z + ridge * np.eye(Z.shape[1]), Z.T @ yc)
    contrib = np.column_stack([Z[:, list(g)] @ beta[list(g)] for g in groups]) if M else np.zeros((m, 0))
    fitted = contrib.sum(1)
    ss_tot = float(yc @ yc)
    r2 = 1.0 - float(((yc - fitted) ** 2).sum()) / ss_tot if ss_tot > 0 else 0.0

    # value of every coalition (bitmask) for every sample
    value = np.zeros((1 << M, m))
    for mask in range(1, 1 << M):
        low = mask & -mask
        value[mask] = value[mask ^ low] + contrib[:, low.bit_length() - 1]
    phi = np.zeros((m, M))
    fact = [math.factorial(k) for k in range(M + 1)]
    for g in range(M):
        bit = 1 << g
        for mask in range(1 << M):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            w = fact[s] * fact[M - s - 1] / fact[M]
            phi[:, g] += w * (value[mask | bit] - value[mask])
    return phi, r2


def shapley_importance(samples: Sequence[HpSample], min_samples: int = 50) -> ImportanceVector:
    if len(samples) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(samples)}")
    X, names, groups = encode_configs([s.config for s in samples])
    y = np.array([s.eod for s in samples], float)
    flags = []
    if np.ptp(y) == 0:
        return ImportanceVector(tuple(names), tuple(0.0 for _ in names), 0.0, ("constant_target",))
    phi, r2 = shapley_values(X, y, groups)
    if r2 < 0.1:
        flags.append("low_surrogate_r2")
    imp = np.abs(phi).mean(0)
    return ImportanceVector(tuple(names), tuple(float(v) for v in imp), r2, tuple(flags))


def _ranking(v) -> tuple[str, ...]:
    return v.ranking if isinstance(v, ImportanceVector) else tuple(v)


def top4_clauses(a, b) -> tuple[bool, bool]:
    """(membership changed, order changed) between the two top-4 lists.

    Membership: at least two of one list's top-4 are missing from the other's.
    Order: some pair present in both top-4 lists appears in opposite order.
    """
    ta, tb = _ranking(a)[:4], _ranking(b)[:4]
    membership = len(set(ta) - set(tb)) >= 2
    shared = [h for h in ta if h in tb]
    order = any(tb.index(x) > tb.index(y) for x, y in itertools.combinations(shared, 2))
    return membership, order


def top4_rank_violation(a, b) -> bool:
    membership, order = top4_clauses(a, b)
    return membership or order


__all__ = ["HpSample", "ImportanceVector", "mutate", "evolve", "write_samples_csv",
           "encode_configs", "shapley_values", "shapley_importance", "top4_clauses",
           "top4_rank_violation"]
