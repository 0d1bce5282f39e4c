"""Fairness practices: feature selection operators and two post-processing mitigators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Dataset
from .learners import TrainedModel, predict

SELECTION = ("drop-sens", "kbest", "fpr", "percentile", "random-drop")
POSTPROC = ("threshold-optimizer", "calibrated-eq-odds")
GAP_LIMIT = 0.02
TARGET_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


class PostProcError(ValueError):
    pass


@dataclass(frozen=True)
class Intervention:
    """One practice.  ``param`` is k, alpha, the percentile or the max drop count."""

    variant: str
    param: float | None = None
    seed: int = 0
    cost: str = "fnr"

    def __post_init__(self):
        if self.variant not in SELECTION + POSTPROC:
            raise ValueError(f"unknown intervention {self.variant!r}")
        p = self.param
        if self.variant == "kbest" and p is not None and (p < 1 or p != int(p)):
            raise ValueError("kbest k must be a positive integer")
        if self.variant == "fpr" and not 0 < (0.05 if p is None else p) < 1:
            raise ValueError("fpr alpha must lie in (0, 1)")
        if self.variant == "percentile" and not 0 < (10 if p is None else p) <= 100:
            raise ValueError("percentile must lie in (0, 100]")
        if self.variant == "random-drop" and not 1 <= (3 if p is None else p) <= 3:
            raise ValueError("random-drop max must lie in [1, 3]")
        if self.cost != "fnr":
            raise ValueError("only the fnr cost is supported")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "Intervention":
        """``name[:param]``, e.g. ``drop-sens``, ``kbest:3``, ``fpr:0.05``, ``random-drop:2``."""
        name, _, arg = text.strip().lower().partition(":")
        name = name.replace("_", "-")
        param = float(arg) if arg else None
        return cls(name, param, seed)

    @property
    def is_selection(self) -> bool:
        return self.variant in SELECTION

    def __str__(self) -> str:
        if self.param is None:
            return self.variant
        p = int(self.param) if float(self.param).is_integer() else self.param
        return f"{self.variant}:{p}"


# ---------------------------------------------------------------- selection

def anova_f_scores(train: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """One-way ANOVA F statistic and p-value of every feature against the label.

    Features with zero within-class variance get ``F = inf, p = 0`` when the
    class means differ and ``F = 0, p = 1`` when the feature is constant.
    """
    y = train.y.astype(bool)
    if y.all() or not y.any():
        raise ValueError("both label classes are required")
    X = train.X
    n = len(y)
    grand = X.mean(0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for cls in (False, True):
        part = X[y == cls]
        mean = part.mean(0)
        between += len(part) * (mean - grand) ** 2
        within += ((part - mean) ** 2).sum(0)
    df_within = n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        F = between / (within / df_within)
    tiny = 1e-12 * np.maximum(1.0, (X ** 2).sum(0))
    zero_within = within <= tiny
    F = np.where(zero_within, np.where(between > tiny, np.inf, 0.0), F)
    p = np.where(np.isinf(F), 0.0, stats.f.sf(F, 1, df_within))
    p = np.where(zero_within & (F == 0), 1.0, p)
    return F, p


def _ranked(F: np.ndarray) -> list[int]:
    return sorted(range(len(F)), key=lambda j: (-F[j], j))


def select_features(train: Dataset, iv: Intervention) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Feature subset kept by a selection intervention, plus flags."""
    names = train.schema.feature_names
    d = len(names)
    flags: list[str] = []
    if iv.variant == "drop-sens":
        keep = [j for j, nm in enumerate(names) if nm != train.schema.sensitive]
    elif iv.variant == "random-drop":
        rng = np.random.default_rng(iv.seed)
        max_drop = int(3 if iv.param is None else iv.param)
        m = int(rng.integers(1, max_drop + 1))
        if m > d - 1:
            m = d - 1
            flags.append("drop_capped")
        dropped = set(rng.choice(d, m, replace=False).tolist()) if m > 0 else set()
        keep = [j for j in range(d) if j not in dropped]
    elif iv.variant in ("kbest", "fpr", "percentile"):
        F, p = anova_f_scores(train)
        order = _ranked(F)
        if iv.variant == "kbest":
            k = math.ceil(d / 2) if iv.param is None else int(iv.param)
            keep = order[:min(k, d)]
        elif iv.variant == "percentile":
            pct = 10.0 if iv.param is None else iv.param
            keep = order[:max(1, math.ceil(pct / 100.0 * d - 1e-9))]
        else:
            alpha = 0.05 if iv.param is None else iv.param
            keep = [j for j in range(d) if p[j] < alpha]
        if not keep:
            keep = order[:1]
            flags.append("empty_selection")
        keep = sorted(keep)
    else:
        raise ValueError(f"{iv.variant} is not a selection intervention")
    if not keep:
        raise ValueError("selection removed every feature")
    return tuple(names[j] for j in sorted(keep)), tuple(flags)


# ---------------------------------------------------------------- post-processing

@dataclass(frozen=True)
class PostProcModel:
    variant: str                                  # "threshold" or "mixing"
    thresholds: dict = field(default_factory=dict)   # group -> threshold
    lambdas: dict = field(default_factory=dict)      # group -> mixing rate
    base_rates: dict = field(default_factory=dict)   # group -> base rate
    flags: tuple[str, ...] = ()
    target: float | None = None

    def __post_init__(self):
        for v in (*self.thresholds.values(), *self.lambdas.values(), *self.base_rates.values()):
            if not 0.0 <= v <= 1.0:
                raise ValueError("post-processing parameters must lie in [0, 1]")

    def to_dict(self) -> dict:
        def keyed(d):
            return {str(k): v for k, v in sorted(d.items())}
        return {"variant": self.variant, "thresholds": keyed(self.thresholds),
                "lambdas": keyed(self.lambdas), "base_rates": keyed(self.base_rates),
                "flags": list(self.flags), "target": self.target}


def _check_groups(labels, groups, need_negatives: bool):
    y = np.asarray(labels).astype(bool)
    g = np.asarray(groups).astype(int)
    for b in (0, 1):
        yb = y[g == b]
        if not yb.any():
            raise PostProcError(f"group {b} has no positive rows")
        if need_negatives and yb.all():
            raise PostProcError(f"group {b} has no negative rows")
    return y, g


def _threshold_table(s: np.ndarray, y: np.ndarray):
    """Candidate thresholds (ascending) with the TPR and correct count of ``s >= t``."""
    cand = np.unique(np.append(s, 1.0))
    pos_sorted = np.sort(s[y])
    neg_sorted = np.sort(s[~y])
    tp = len(pos_sorted) - np.searchsorted(pos_sorted, cand, side="left")
    fp = len(neg_sorted) - np.searchsorted(neg_sorted, cand, side="left")
    tn = len(neg_sorted) - fp
    return cand, tp / len(pos_sorted), tp + tn


def fit_threshold_optimizer(scores, labels, groups, gap_limit: float = GAP_LIMIT) -> PostProcModel:
    """Per-group thresholds sharing a target TPR, chosen for overall accuracy."""
    s = np.asarray(scores, float)
    y, g = _check_groups(labels, groups, need_negatives=True)
    tables = {b: _threshold_table(s[g == b], y[g == b]) for b in (0, 1)}
    rows = []
    for target in TARGET_GRID:
        picked = {}
        for b, (cand, tpr, correct) in tables.items():
            ok = np.flatnonzero(tpr >= target - 1e-12)
            # highest accuracy; among equals prefer the higher threshold
            best = ok[np.lexsort((cand[ok], correct[ok]))[-1]]
            picked[b] = (float(cand[best]), float(tpr[best]), int(correct[best]))
        acc = (picked[0][2] + picked[1][2]) / len(s)
        gap = abs(picked[1][1] - picked[0][1])
        rows.append((float(target), acc, gap, picked))
    feasible = [r for r in rows if r[2] <= gap_limit + 1e-12]
    flags: tuple[str, ...] = ()
    if feasible:
        best = max(feasible, key=lambda r: (r[1], -r[0]))
    else:
        best = min(rows, key=lambda r: (r[2], -r[1], r[0]))
        flags = ("gap_infeasible",)
    target, _, _, picked = best
    return PostProcModel("threshold", thresholds={b: picked[b][0] for b in (0, 1)},
                         flags=flags, target=target)


def generalized_fnr(scores, labels, groups, b: int) -> float:
    s = np.asarray(scores, float)
    sel = (np.asarray(groups).astype(int) == b) & np.asarray(labels).astype(bool)
    if not sel.any():
        raise PostProcError(f"group {b} has no positive rows")
    return float(1.0 - s[sel].mean())


def fit_calibrated_eq_odds(scores, labels, groups, cost: str = "fnr") -> PostProcModel:
    """Mix the lower-FNR group's scores toward its base rate until generalized FNRs match."""
    if cost != "fnr":
        raise ValueError("only the fnr cost is supported")
    s = np.asarray(scores, float)
    y, g = _check_groups(labels, groups, need_negatives=False)
    gfnr = {b: generalized_fnr(s, y, g, b) for b in (0, 1)}
    base = {b: float(y[g == b].mean()) for b in (0, 1)}
    lambdas = {0: 0.0, 1: 0.0}
    flags = []
    low = 0 if gfnr[0] < gfnr[1] else 1
    high = 1 - low
    if gfnr[low] != gfnr[high]:
        if base[low] in (0.0, 1.0):
            flags.append("degenerate_base_rate")
        else:
            m_low = 1.0 - gfnr[low]
            denom = m_low - base[low]
            lam = (gfnr[high] - gfnr[low]) / denom if denom > 0 else math.inf
            if not 0.0 <= lam <= 1.0:
                flags.append("lambda_clamped")
                lam = min(max(lam, 0.0), 1.0)
            lambdas[low] = float(lam)
    return PostProcModel("mixing", lambdas=lambdas, base_rates=base, flags=tuple(flags))


def postproc_labels(pp: PostProcModel, scores, groups) -> np.ndarray:
    s = np.asarray(scores, float)
    g = np.asarray(groups).astype(int)
    known = set(pp.thresholds) | set(pp.lambdas)
    unknown = set(np.unique(g).tolist()) - known
    if unknown:
        raise PostProcError(f"unknown group values {sorted(unknown)}")
    out = np.zeros(len(s), dtype=int)
    for b in known:
        sel = g == b
        if pp.variant == "threshold":
            out[sel] = s[sel] >= pp.thresholds[b]
        else:
            lam = pp.lambdas[b]
            mixed = lam * pp.base_rates[b] + (1 - lam) * s[sel]
            out[sel] = mixed >= 0.5
    return out


def apply_postproc(m: TrainedModel, pp: PostProcModel, rows, groups) -> np.ndarray:
    _, scores = predict(m, rows)
    return postproc_labels(pp, scores, groups)


def fit_postproc(iv: Intervention, m: TrainedModel, calib: Dataset) -> PostProcModel:
    """Fit ``iv``'s mitigator on the model's scores over ``calib``."""
    _, scores = predict(m, calib)
    if iv.variant == "threshold-optimizer":
        return fit_threshold_optimizer(scores, calib.y, calib.sensitive)
    if iv.variant == "calibrated-eq-odds":
        return fit_calibrated_eq_odds(scores, calib.y, calib.sensitive, iv.cost)
    raise ValueError(f"{iv.variant} is not a post-processing intervention")


__all__ = [
    "Intervention", "PostProcModel", "PostProcError", "SELECTION", "POSTPROC", "GAP_LIMIT",
    "anova_f_scores", "select_features", "fit_threshold_optimizer", "generalized_fnr",
    "fit_calibrated_eq_odds", "postproc_labels", "apply_postproc", "fit_postproc",
]
