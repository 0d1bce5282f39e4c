"""In-distribution check for synthetic rows.

Training rows (label excluded) are standardized and clustered with k-means.
A generated row is accepted when its Euclidean distance to the nearest
centroid is at most the mean nearest-centroid distance of a validation set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, ScalerParams, fit_scaler


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    scaler: ScalerParams

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def embed(self, d: Dataset) -> np.ndarray:
        if tuple(d.schema.feature_names) != self.scaler.columns:
            raise ValueError("dataset features differ from the clustered features")
        return self.scaler.transform_array(d.X)

    def nearest_distance(self, d: Dataset) -> np.ndarray:
        return _nearest(self.embed(d), self.centroids)[1]


@dataclass(frozen=True)
class AcceptanceCriterion:
    clusters: ClusterModel
    threshold: float

    def __post_init__(self):
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError("threshold must be finite and non-negative")

    def accepts(self, d: Dataset) -> np.ndarray:
        return self.clusters.nearest_distance(d) <= self.threshold

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "centroids": self.clusters.centroids.tolist(),
            "scaler": self.clusters.scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcceptanceCriterion":
        scaler = ScalerParams.from_dict(d["scaler"])
        cents = np.array(d["centroids"], float).reshape(-1, len(scaler.columns))
        return cls(ClusterModel(cents, scaler), float(d["threshold"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def _nearest(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(X) == 0:
        return np.empty(0, int), np.empty(0)
    d2 = _sq_dists(X, C)
    idx = d2.argmin(1)
    # exact distances for the winners; the expanded form loses precision near 0
    diff = X - C[idx]
    return idx, np.sqrt((diff * diff).sum(1))


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100,
           tol: float = 1e-6) -> np.ndarray:
    """Lloyd's algorithm from a k-means++ start."""
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1]).ravel()
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[c] = X[rng.integers(n)]
        else:
            centers[c] = X[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, _sq_dists(X, centers[c:c + 1]).ravel())
    for _ in range(max_iter):
        labels = _sq_dists(X, centers).argmin(1)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        new = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centers)
        moved = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if moved < tol:
            break
    return centers


def fit_clusters(train: Dataset, k: int = 100, seed: int = 0) -> ClusterModel:
    if train.n < k:
        raise ValueError(f"need at least k={k} rows to cluster, got {train.n}")
    if k < 1:
        raise ValueError("k must be positive")
    scaler = fit_scaler(train.X, train.schema.feature_names, train.schema.kinds[:-1])
    X = scaler.transform_array(train.X)
    centers = kmeans(X, k, np.random.default_rng(seed))
    return ClusterModel(centers, scaler)


def calibrate_threshold(clusters: ClusterModel, validation: Dataset) -> AcceptanceCriterion:
    if validation.n == 0:
        raise ValueError("validation set is empty")
    return AcceptanceCriterion(clusters, float(clusters.nearest_distance(validation).mean()))


def accept_rate(crit: AcceptanceCriterion, samples: Dataset) -> float:
    if samples.n == 0:
        raise ValueError("no samples to score")
    return float(crit.accepts(samples).mean())


def filter_samples(crit: AcceptanceCriterion, samples: Dataset) -> Dataset:
    if samples.n == 0:
        return samples
    return samples.mask(crit.accepts(samples))


def mean_distance(crit: AcceptanceCriterion, samples: Dataset) -> float:
    return float(crit.clusters.nearest_distance(samples).mean())


def uniform_probe(train: Dataset, n: int, seed: int) -> Dataset:
    """Rows drawn uniformly per feature over ``[min - 2 sd, max + 2 sd]`` of ``train``.

    Count and boolean columns are rounded and clipped back into their domain
    so the probe remains a valid :class:`Dataset`; the label is random.
    """
    rng = np.random.default_rng(seed)
    X = train.X
    lo = X.min(0) - 2 * X.std(0)
    hi = X.max(0) + 2 * X.std(0)
    cols = rng.uniform(lo, hi, size=(n, X.shape[1]))
    for j, kind in enumerate(train.schema.kinds[:-1]):
        if kind.value == "boolean":
            cols[:, j] = (rng.random(n) < 0.5).astype(float)
        elif kind.value == "count":
            cols[:, j] = np.maximum(np.round(cols[:, j]), 0.0)
    y = (rng.random(n) < 0.5).astype(float)
    return Dataset(train.schema, np.column_stack([cols, y]))


def validator_quality(crit: AcceptanceCriterion, held_out: Dataset,
                      random_probe: Dataset) -> tuple[float, float]:
    """(accept rate on real held-out rows, accept rate on the random probe)."""
    return accept_rate(crit, held_out), accept_rate(crit, random_probe)


def build_criterion(train: Dataset, validation: Dataset, k: int = 100, seed: int = 0) -> AcceptanceCriterion:
    k = min(k, train.n)
    return calibrate_threshold(fit_clusters(train, k, seed), validation)
