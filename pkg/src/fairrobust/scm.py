"""Structural causal models with one generalized linear equation per node.

Continuous nodes are Gaussian, count nodes Poisson with a log link, and
boolean nodes (the label included) Bernoulli with a logit link.  Weight
uncertainty is a Laplace approximation around the maximum-likelihood fit.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset, FeatureKind, Schema
from .glm import fit_glm, separated
from .graphs import Dag

POISSON_RATE_CAP = 1e6
RIDGE = 1e-4


class SamplingWarning(RuntimeWarning):
    pass


_FAMILY = {
    FeatureKind.CONTINUOUS: "gaussian",
    FeatureKind.COUNT: "poisson",
    FeatureKind.BOOLEAN: "bernoulli",
}


@dataclass(frozen=True)
class NodeModel:
    node: str
    kind: FeatureKind
    parents: tuple[str, ...]
    weights: tuple[float, ...]
    bias: float
    noise_sd: float | None = None
    shift_eps: float = 0.0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != len(self.parents):
            raise ValueError(f"{self.node}: {len(self.weights)} weights for {len(self.parents)} parents")
        if (self.noise_sd is not None) != (self.kind is FeatureKind.CONTINUOUS):
            raise ValueError(f"{self.node}: noise_sd must be set exactly for continuous nodes")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError(f"{self.node}: negative noise_sd")

    def linear(self, parent_values: np.ndarray) -> np.ndarray:
        """``bias + weights . parents`` for a (n, n_parents) array."""
        if not self.parents:
            return np.full(len(parent_values), self.bias)
        return self.bias + parent_values @ np.asarray(self.weights)

    def with_coef(self, coef: np.ndarray) -> "NodeModel":
        return replace(self, bias=float(coef[0]), weights=tuple(float(c) for c in coef[1:]))

    def to_dict(self) -> dict:
        return {
            "node": self.node, "kind": self.kind.value, "parents": list(self.parents),
            "weights": list(self.weights), "bias": self.bias, "noise_sd": self.noise_sd,
            "shift_eps": self.shift_eps, "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NodeModel":
        return cls(d["node"], d["kind"], tuple(d["parents"]), tuple(d["weights"]), d["bias"],
                   d.get("noise_sd"), d.get("shift_eps", 0.0), tuple(d.get("flags", ())))


@dataclass(frozen=True)
class ScmModel:
    dag: Dag
    nodes: dict[str, NodeModel]
    schema: Schema

    def __post_init__(self):
        if set(self.nodes) != set(self.dag.nodes):
            raise ValueError("SCM must define exactly one equation per DAG node")
        for name, nm in self.nodes.items():
            if nm.parents != self.dag.parents(name):
                raise ValueError(f"{name}: parents {nm.parents} differ from DAG parents {self.dag.parents(name)}")

    @property
    def label(self) -> NodeModel:
        return self.nodes[self.schema.label]

    @property
    def flags(self) -> tuple[str, ...]:
        return tuple(f"{n}:{f}" for n in self.dag.nodes for f in self.nodes[n].flags)

    def weight_vector(self) -> np.ndarray:
        return np.array([w for n in self.dag.nodes for w in self.nodes[n].weights])

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "nodes": list(self.dag.nodes),
            "edges": [list(e) for e in self.dag.sorted_edges()],
            "equations": [self.nodes[n].to_dict() for n in self.dag.nodes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScmModel":
        dag = Dag(tuple(d["nodes"]), frozenset(tuple(e) for e in d["edges"]))
        nodes = {e["node"]: NodeModel.from_dict(e) for e in d["equations"]}
        return cls(dag, nodes, Schema.from_dict(d["schema"]))


@dataclass(frozen=True)
class WeightPosterior:
    """Gaussian posterior over ``[bias, weights...]`` per node."""

    mean: dict[str, np.ndarray]
    cov: dict[str, np.ndarray]

    def to_dict(self) -> dict:
        return {n: {"mean": self.mean[n].tolist(), "cov": self.cov[n].tolist()} for n in self.mean}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightPosterior":
        return cls({n: np.array(v["mean"], float) for n, v in d.items()},
                   {n: np.array(v["cov"], float).reshape(len(v["mean"]), len(v["mean"]))
                    for n, v in d.items()})


@dataclass(frozen=True)
class ShiftSpec:
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("label-shift epsilon must lie in [0, 1]")


def _fit_node(name: str, kind: FeatureKind, parents: tuple[str, ...], data: Dataset):
    y = data.column(name)
    X = data.columns(parents) if parents else np.empty((data.n, 0))
    flags: list[str] = []
    live = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) > 0]
    if len(live) < X.shape[1]:
        flags.append("zero_variance_parent")
    family = _FAMILY[kind]
    penalize_intercept = family == "bernoulli" and y.min() == y.max()
    fit = fit_glm(X[:, live], y, family, ridge=RIDGE, penalize_intercept=penalize_intercept)
    if family == "bernoulli" and (penalize_intercept or separated(X[:, live], y, fit.coef)):
        if not penalize_intercept:
            fit = fit_glm(X[:, live], y, family, ridge=RIDGE, penalize_intercept=True)
        flags.append("separation")
    flags += fit.flags
    p = X.shape[1]
    coef = np.zeros(p + 1)
    cov = np.zeros((p + 1, p + 1))
    keep = [0] + [j + 1 for j in live]
    coef[keep] = fit.coef
    cov[np.ix_(keep, keep)] = fit.cov
    node = NodeModel(name, kind, parents, tuple(coef[1:]), float(coef[0]),
                     fit.noise_sd if kind is FeatureKind.CONTINUOUS else None, 0.0, tuple(flags))
    return node, coef, cov


def fit_scm(dag: Dag, train: Dataset) -> tuple[ScmModel, WeightPosterior]:
    """Maximum-likelihood node equations on ``dag``'s parents plus Laplace covariances."""
    if train.n == 0:
        raise ValueError("cannot fit an SCM on an empty dataset")
    schema = train.schema
    if set(dag.nodes) != set(schema.columns):
        raise ValueError("DAG nodes must be exactly the schema's features and label")
    nodes, mean, cov = {}, {}, {}
    for name in dag.nodes:
        nm, m, c = _fit_node(name, schema.kind_of(name), dag.parents(name), train)
        nodes[name], mean[name], cov[name] = nm, m, c
    return ScmModel(dag, nodes, schema), WeightPosterior(mean, cov)


def _psd_factor(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    clipped = bool(np.any(vals < -1e-8 * max(1.0, np.max(np.abs(vals), initial=0.0))))
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals), clipped


def draw_models(scm: ScmModel, post: WeightPosterior, n: int, seed: int) -> list[ScmModel]:
    """``n`` models with node coefficients drawn from the Gaussian posterior."""
    if n < 1:
        raise ValueError("n must be at least 1")
    factors = {}
    for name in scm.dag.nodes:
        L, clipped = _psd_factor(post.cov[name])
        if clipped:
            warnings.warn(f"{name}: posterior covariance not PSD; eigenvalues clipped at 0",
                          SamplingWarning, stacklevel=2)
        factors[name] = L
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        nodes = {}
        for name in scm.dag.nodes:
            L = factors[name]
            coef = post.mean[name] + L @ rng.standard_normal(L.shape[1])
            nodes[name] = scm.nodes[name].with_coef(coef)
        out.append(ScmModel(scm.dag, nodes, scm.schema))
    return out


def sample(scm: ScmModel, n: int, seed: int) -> Dataset:
    """Draw ``n`` rows node by node in topological order.

    Each node owns an RNG stream derived from ``(seed, node position)``, so
    changing one node's equation leaves the draws of the other nodes intact.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    cols: dict[str, np.ndarray] = {}
    pos = {v: i for i, v in enumerate(scm.dag.nodes)}
    for name in scm.dag.topo_order:
        nm = scm.nodes[name]
        rng = np.random.default_rng([seed, pos[name]])
        pa = np.column_stack([cols[p] for p in nm.parents]) if nm.parents else np.empty((n, 0))
        eta = nm.linear(pa)
        if nm.kind is FeatureKind.CONTINUOUS:
            cols[name] = eta + nm.noise_sd * rng.standard_normal(n)
        elif nm.kind is FeatureKind.COUNT:
            rate = np.exp(np.clip(eta, -745, 50))
            if np.any(rate > POISSON_RATE_CAP):
                warnings.warn(f"{name}: Poisson rate clamped at {POISSON_RATE_CAP:g}",
                              SamplingWarning, stacklevel=2)
                rate = np.minimum(rate, POISSON_RATE_CAP)
            cols[name] = rng.poisson(rate).astype(float)
        else:
            u = rng.random(n)
            v = rng.random(n)
            p = np.clip(expit(eta) + nm.shift_eps * v, 0.0, 1.0)
            cols[name] = (u < p).astype(float)
    values = np.column_stack([cols[c] for c in scm.schema.columns])
    return Dataset(scm.schema, values)


def apply_label_shift(scm: ScmModel, shift: ShiftSpec) -> ScmModel:
    """Copy of ``scm`` whose label probability becomes ``clip(sigmoid(x) + U[0, eps])``."""
    label = scm.schema.label
    if scm.nodes[label].kind is not FeatureKind.BOOLEAN:
        raise ValueError("label node must be Bernoulli")
    nodes = dict(scm.nodes)
    nodes[label] = replace(nodes[label], shift_eps=float(shift.epsilon))
    return ScmModel(scm.dag, nodes, scm.schema)


def baseline_weights(scm: ScmModel, mode: str, seed: int) -> ScmModel:
    """RND: every edge weight i.i.d. N(0, 1).  EQ: one N(0, 1) draw shared by all edges."""
    mode = mode.upper()
    rng = np.random.default_rng(seed)
    shared = rng.standard_normal()
    nodes = {}
    for name in scm.dag.nodes:
        nm = scm.nodes[name]
        if mode == "RND":
            w = rng.standard_normal(len(nm.parents))
        elif mode == "EQ":
            w = np.full(len(nm.parents), shared)
        else:
            raise ValueError(f"unknown baseline mode {mode!r}")
        nodes[name] = replace(nm, weights=tuple(float(x) for x in w))
    return ScmModel(scm.dag, nodes, scm.schema)


def save_model(path, scm: ScmModel, post: WeightPosterior | None = None) -> None:
    doc = {"model": scm.to_dict()}
    if post is not None:
        doc["posterior"] = post.to_dict()
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> tuple[ScmModel, WeightPosterior | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    post = WeightPosterior.from_dict(doc["posterior"]) if "posterior" in doc else None
    return ScmModel.from_dict(doc["model"]), post


__all__ = [
    "NodeModel", "ScmModel", "WeightPosterior", "ShiftSpec", "SamplingWarning", "fit_scm",
    "draw_models", "sample", "apply_label_shift", "baseline_weights", "save_model", "load_model",
]

