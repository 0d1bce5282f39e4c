"""Logistic regression, CART decision tree and linear SVM trainers.

All three are written directly on numpy so that every hyperparameter has a
concrete meaning in the optimizer.  Models emit a score in [0, 1] and the
predicted label is ``score >= threshold``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Union

import numpy as np
from scipy.special import expit

from .data import Dataset
from .glm import fit_glm


class LearnerKind(str, enum.Enum):
    LR = "logistic_regression"
    DT = "decision_tree"
    SVM = "linear_svm"

    @classmethod
    def parse(cls, text: str) -> "LearnerKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"lr": cls.LR, "dt": cls.DT, "svm": cls.SVM}
        if key in aliases:
            return aliases[key]
        return cls(key)


class TrainingError(ValueError):
    pass


class FeatureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LRConfig:
    penalty: str = "l2"
    C: float = 1.0
    tol: float = 1e-4
    fit_intercept: bool = True
    intercept_scaling: float = 1.0
    max_iter: int = 100
    l1_ratio: float | None = None
    solver: str = "newton"

    def __post_init__(self):
        if self.penalty not in ("none", "l2", "l1", "elasticnet"):
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.solver not in ("gradient", "newton"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.penalty == "elasticnet" and self.l1_ratio is None:
            raise ValueError("elasticnet requires l1_ratio")
        if self.l1_ratio is not None and not 0 <= self.l1_ratio <= 1:
            raise ValueError("l1_ratio must lie in [0, 1]")
        if self.C <= 0 or self.tol <= 0 or self.intercept_scaling <= 0 or self.max_iter < 1:
            raise ValueError("C, tol, intercept_scaling must be positive and max_iter >= 1")


@dataclass(frozen=True)
class DTConfig:
    max_depth: int = 8
    min_samples_leaf: int = 1
    criterion: str = "gini"

    def __post_init__(self):
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth and min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class SVMConfig:
    C: float = 1.0
    max_iter: int = 500
    tol: float = 1e-4

    def __post_init__(self):
        if self.C <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValueError("C and tol must be positive and max_iter >= 1")


HpConfig = Union[LRConfig, DTConfig, SVMConfig]

_CONFIG_CLASS = {LearnerKind.LR: LRConfig, LearnerKind.DT: DTConfig, LearnerKind.SVM: SVMConfig}


@dataclass(frozen=True)
class HpParam:
    """One searchable hyperparameter: categorical values or a numeric range."""

    kind: str                 # "cat", "log" (log-uniform real), "real", "int"
    values: tuple = ()
    low: float = 0.0
    high: float = 0.0


HP_SPACE: dict[LearnerKind, dict[str, HpParam]] = {
    LearnerKind.LR: {
        "penalty": HpParam("cat", ("none", "l2", "l1", "elasticnet")),
        "C": HpParam("log", low=1e-4, high=1e4),
        "tol": HpParam("log", low=1e-6, high=1e-1),
        "fit_intercept": HpParam("cat", (True, False)),
        "intercept_scaling": HpParam("real", low=0.1, high=10.0),
        "max_iter": HpParam("int", low=50, high=500),
        "l1_ratio": HpParam("real", low=0.0, high=1.0),
        "solver": HpParam("cat", ("gradient", "newton")),
    },
    LearnerKind.DT: {
        "max_depth": HpParam("int", low=1, high=20),
        "min_samples_leaf": HpParam("int", low=1, high=50),
        "criterion": HpParam("cat", ("gini", "entropy")),
    },
    LearnerKind.SVM: {
        "C": HpParam("log", low=1e-4, high=1e4),
        "max_iter": HpParam("int", low=50, high=500),
        "tol": HpParam("log", low=1e-6, high=1e-1),
    },
}


def config_kind(cfg: HpConfig) -> LearnerKind:
    for kind, cls in _CONFIG_CLASS.items():
        if isinstance(cfg, cls):
            return kind
    raise TypeError(f"not a hyperparameter config: {cfg!r}")


def default_config(kind: LearnerKind) -> HpConfig:
    return _CONFIG_CLASS[LearnerKind(kind)]()


def draw_value(p: HpParam, rng: np.random.Generator):
    if p.kind == "cat":
        return p.values[int(rng.integers(len(p.values)))]
    if p.kind == "log":
        return float(math.exp(rng.uniform(math.log(p.low), math.log(p.high))))
    if p.kind == "int":
        return int(rng.integers(int(p.low), int(p.high) + 1))
    return float(rng.uniform(p.low, p.high))


def random_config(kind: LearnerKind, rng: np.random.Generator) -> HpConfig:
    kind = LearnerKind(kind)
    values = {name: draw_value(p, rng) for name, p in HP_SPACE[kind].items()}
    return _CONFIG_CLASS[kind](**values)


def config_to_dict(cfg: HpConfig) -> dict:
    return {"kind": config_kind(cfg).value, **asdict(cfg)}


def config_from_dict(d: dict) -> HpConfig:
    d = dict(d)
    kind = LearnerKind(d.pop("kind"))
    return _CONFIG_CLASS[kind](**d)


@dataclass(frozen=True)
class ParamConfig:
    hp: HpConfig
    features: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValueError("feature subset must be nonempty")
        if len(set(self.features)) != len(self.features):
            raise ValueError("duplicate features in subset")

    @property
    def kind(self) -> LearnerKind:
        return config_kind(self.hp)


@dataclass(frozen=True)
class PerfMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "flags": list(self.flags)}


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: LearnerKind
    features: tuple[str, ...]
    params: dict = field(repr=False)
    threshold: float = 0.5
    flags: tuple[str, ...] = ()

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise FeatureMismatch(f"expected {len(self.features)} feature columns, got shape {X.shape}")
        if self.kind is LearnerKind.DT:
            return _tree_scores(self.params, X)
        Z = (X - self.params["mean"]) / self.params["scale"]
        margin = Z @ self.params["w"] + self.params["b"]
        if self.kind is LearnerKind.LR:
            return expit(margin)
        a, c = self.params["platt"]
        return expit(a + c * margin)

    def to_dict(self) -> dict:
        def plain(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"kind": self.kind.value, "features": list(self.features), "threshold": self.threshold,
                "flags": list(self.flags),
                "params": {k: plain(v) for k, v in sorted(self.params.items()) if k != "trace"}}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------- logistic

def _penalty_parts(cfg: LRConfig) -> tuple[float, float]:
    """(l1 strength, l2 strength) multiplying ``|w|_1`` and ``0.5 |w|^2``."""
    lam = 1.0 / cfg.C
    if cfg.penalty == "none":
        return 0.0, 0.0
    if cfg.penalty == "l2":
        return 0.0, lam
    if cfg.penalty == "l1":
        return lam, 0.0
    r = cfg.l1_ratio
    return lam * r, lam * (1 - r)


def _lr_design(Z: np.ndarray, cfg: LRConfig) -> np.ndarray:
    # the intercept is a synthetic constant feature, so its weight is penalized too
    if cfg.fit_intercept:
        return np.column_stack([Z, np.full(len(Z), cfg.intercept_scaling)])
    return Z


def _lr_objective(beta, A, y, l1, l2, n):
    eta = A @ beta
    loss = np.sum(np.logaddexp(0.0, eta) - y * eta) / n
    return float(loss + (l1 * np.abs(beta).sum() + 0.5 * l2 * beta @ beta) / n)


def _fit_lr(Z: np.ndarray, y: np.ndarray, cfg: LRConfig):
    A = _lr_design(Z, cfg)
    n, p = A.shape
    l1, l2 = _penalty_parts(cfg)
    beta = np.zeros(p)
    trace = [_lr_objective(beta, A, y, l1, l2, n)]
    flags = []
    converged = False
    if l1 > 0 and cfg.solver == "newton":
        flags.append("l1_uses_proximal_gradient")
    if cfg.solver == "newton" and l1 == 0:
        for _ in range(cfg.max_iter):
            mu = expit(A @ beta)
            grad = (A.T @ (mu - y) + l2 * beta) / n
            if np.max(np.abs(grad)) <= cfg.tol:
                converged = True
                break
            H = (A * (mu * (1 - mu))[:, None]).T @ A / n + (l2 / n + 1e-10) * np.eye(p)
            step = np.linalg.solve(H, grad)
            t = 1.0
            while t > 1e-10:
                cand = beta - t * step
                obj = _lr_objective(cand, A, y, l1, l2, n)
                if obj <= trace[-1]:
                    break
                t *= 0.5
            else:
                break
            beta = cand
            trace.append(obj)
    else:
        # proximal gradient with a fixed 1/L step; L bounds the loss curvature
        L = 0.25 * np.linalg.norm(A, 2) ** 2 / n + l2 / n
        step = 1.0 / max(L, 1e-12)
        for _ in range(cfg.max_iter):
            mu = expit(A @ beta)
            grad = (A.T @ (mu - y) + l2 * beta) / n
            z = beta - step * grad
            new = np.sign(z) * np.maximum(np.abs(z) - step * l1 / n, 0.0)
            moved = np.max(np.abs(new - beta)) / step
            beta = new
            trace.append(_lr_objective(beta, A, y, l1, l2, n))
            if moved <= cfg.tol:
                converged = True
                break
    if not converged:
        flags.append("not_converged")
    w = beta[:Z.shape[1]]
    b = float(beta[-1] * cfg.intercept_scaling) if cfg.fit_intercept else 0.0
    return w, b, trace, flags


# ---------------------------------------------------------------- tree

def _impurity(pos: np.ndarray, tot: np.ndarray, criterion: str) -> np.ndarray:
    p = np.divide(pos, tot, out=np.zeros_like(pos, dtype=float), where=tot > 0)
    if criterion == "gini":
        return 2 * p * (1 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(p < 1, (1 - p) * np.log2(1 - p), 0.0))
    return h


def _best_split(X: np.ndarray, y: np.ndarray, cfg: DTConfig):
    n = len(y)
    parent = _impurity(np.array([y.sum()]), np.array([n]), cfg.criterion)[0]
    best = (1e-12, None, None)
    leaf = cfg.min_samples_leaf
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        left_n = np.arange(1, n)
        left_pos = np.cumsum(ys)[:-1]
        valid = (xs[1:] > xs[:-1]) & (left_n >= leaf) & (n - left_n >= leaf)
        if not valid.any():
            continue
        right_n = n - left_n
        right_pos = ys.sum() - left_pos
        child = (left_n * _impurity(left_pos, left_n, cfg.criterion)
                 + right_n * _impurity(right_pos, right_n, cfg.criterion)) / n
        gain = np.where(valid, parent - child, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-12:
            best = (float(gain[k]), j, 0.5 * (xs[k] + xs[k + 1]))
    return best[1], best[2]


def _fit_tree(X: np.ndarray, y: np.ndarray, cfg: DTConfig) -> dict:
    feat, thr, left, right, value = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        ys = y[idx]
        if depth >= cfg.max_depth or len(idx) < 2 * cfg.min_samples_leaf or ys.min() == ys.max():
            return node
        j, t = _best_split(X[idx], ys, cfg)
        if j is None:
            return node
        go_left = X[idx, j] <= t
        feat[node], thr[node] = j, t
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return {"feature": np.array(feat), "threshold": np.array(thr), "left": np.array(left),
            "right": np.array(right), "value": np.array(value)}


def _tree_scores(params: dict, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=int)
    feat, thr, left, right = params["feature"], params["threshold"], params["left"], params["right"]
    while True:
        active = feat[node] >= 0
        if not active.any():
            break
        rows = np.flatnonzero(active)
        nd = node[rows]
        go_left = X[rows, feat[nd]] <= thr[nd]
        node[rows] = np.where(go_left, left[nd], right[nd])
    return params["value"][node]


# ---------------------------------------------------------------- svm

def _fit_svm(Z: np.ndarray, y: np.ndarray, cfg: SVMConfig):
    n, p = Z.shape
    s = 2 * y - 1
    lam = 1.0 / (cfg.C * n)
    w, b = np.zeros(p), 0.0

    def objective(w, b):
        return 0.5 * lam * w @ w + np.mean(np.maximum(0.0, 1 - s * (Z @ w + b)))

    best = (objective(w, b), w.copy(), b)
    stall = 0
    for t in range(1, cfg.max_iter + 1):
        active = s * (Z @ w + b) < 1
        gw = lam * w - (s[active, None] * Z[active]).sum(0) / n
        gb = -s[active].sum() / n
        eta = 1.0 / math.sqrt(t)
        w, b = w - eta * gw, b - eta * gb
        obj = objective(w, b)
        if obj < best[0] - cfg.tol:
            stall = 0
        else:
            stall += 1
        if obj < best[0]:
            best = (obj, w.copy(), b)
        if stall >= 50:
            break
    flags = [] if stall >= 50 else ["not_converged"]
    _, w, b = best
    margin = Z @ w + b
    platt = fit_glm(margin[:, None], y, "bernoulli", ridge=1e-4).coef
    return w, float(b), (float(platt[0]), float(platt[1])), flags


# ---------------------------------------------------------------- api

def _feature_matrix(d: Dataset, features) -> np.ndarray:
    missing = [f for f in features if f not in d.schema.feature_names]
    if missing:
        raise FeatureMismatch(f"features not in schema: {missing}")
    return d.columns(features)


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(0)
    sd = X.std(0)
    return mean, np.where(sd > 0, sd, 1.0)


def train(kind: LearnerKind, cfg: ParamConfig, data: Dataset, seed: int = 0) -> TrainedModel:
    """Fit one classifier on ``data`` restricted to ``cfg.features``.

    Every trainer is deterministic, so ``seed`` only enters through
    callers that derive data or configs from it.
    """
    kind = LearnerKind(kind)
    if config_kind(cfg.hp) is not kind:
        raise ValueError(f"config {type(cfg.hp).__name__} does not match learner {kind.value}")
    X = _feature_matrix(data, cfg.features)
    y = data.y
    if data.n == 0 or y.min() == y.max():
        raise TrainingError("training data must contain both classes")
    if kind is LearnerKind.DT:
        return TrainedModel(kind, cfg.features, _fit_tree(X, y, cfg.hp))
    mean, scale = _standardizer(X)
    Z = (X - mean) / scale
    if kind is LearnerKind.LR:
        w, b, trace, flags = _fit_lr(Z, y, cfg.hp)
        params = {"mean": mean, "scale": scale, "w": w, "b": b, "trace": np.array(trace)}
        return TrainedModel(kind, cfg.features, params, flags=tuple(flags))
    w, b, platt, flags = _fit_svm(Z, y, cfg.hp)
    params = {"mean": mean, "scale": scale, "w": w, "b": b, "platt": platt}
    return TrainedModel(kind, cfg.features, params, flags=tuple(flags))


def predict(m: TrainedModel, rows) -> tuple[np.ndarray, np.ndarray]:
    """(labels, scores); ``rows`` is a Dataset or a matrix in ``m.features`` order."""
    X = _feature_matrix(rows, m.features) if isinstance(rows, Dataset) else rows
    s = m.scores(X)
    return (s >= m.threshold).astype(int), s


def perf_from_labels(y: np.ndarray, yhat: np.ndarray) -> PerfMetrics:
    y = np.asarray(y).astype(bool)
    yhat = np.asarray(yhat).astype(bool)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    tp = int(np.sum(y & yhat))
    pred_pos = int(yhat.sum())
    actual_pos = int(y.sum())
    flags = []
    if pred_pos == 0:
        flags.append("no_predicted_positives")
    precision = tp / pred_pos if pred_pos else 0.0
    recall = tp / actual_pos if actual_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PerfMetrics(float(np.mean(y == yhat)), precision, recall, f1, tuple(flags))


def evaluate(m: TrainedModel, test: Dataset) -> PerfMetrics:
    labels, _ = predict(m, test)
    return perf_from_labels(test.y, labels)


def perf_within(base: PerfMetrics, other: PerfMetrics, tolerance: float = 0.05) -> bool:
    """True when ``other`` loses at most ``tolerance`` accuracy and F1 against ``base``."""
    return (base.accuracy - other.accuracy <= tolerance + 1e-12
            and base.f1 - other.f1 <= tolerance + 1e-12)


def config_fields(cfg: HpConfig) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cfg))


__all__ = [
    "LearnerKind", "LRConfig", "DTConfig", "SVMConfig", "HpConfig", "HpParam", "HP_SPACE",
    "ParamConfig", "PerfMetrics", "TrainedModel", "TrainingError", "FeatureMismatch",
    "default_config", "random_config", "draw_value", "config_kind", "config_to_dict",
    "config_from_dict", "config_fields", "train", "predict", "evaluate", "perf_from_labels",
    "perf_within",
]
