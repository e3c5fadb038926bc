"""Lloyd's k-means with exact operation accounting.

Each iteration costs, per point, k distances of d subtractions, d squarings
and d-1 summation adds, plus d adds to accumulate the point into its new
centroid. Divisions by cluster size are not counted. Work done outside the
``it`` Lloyd iterations (empty-cluster reseeding, the final relabeling under
the last centroids) is tallied separately in ``extra_ops``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream


@dataclass(frozen=True)
class KMeansParams:
    k: int = 100
    it: int = 20
    tol: float = 0.0
    restarts: int = 1  # independent initializations; the lowest objective wins

    def __post_init__(self):
        if self.k < 1 or self.it < 1 or self.tol < 0 or self.restarts < 1:
            raise ValueError(f"invalid {self}")


@dataclass(frozen=True)
class OpCount:
    adds: int = 0
    mults: int = 0

    def __add__(self, other: "OpCount") -> "OpCount":
        return OpCount(self.adds + other.adds, self.mults + other.mults)


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    objective: float
    iterations_run: int
    op_count: OpCount
    extra_ops: OpCount = OpCount()
    reseeds: int = 0
    history: list[float] = field(default_factory=list)


def squared_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign_step(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per point; ties go to the lowest centroid index."""
    X = np.asarray(X, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if X.ndim != 2 or centroids.ndim != 2 or X.shape[1] != centroids.shape[1]:
        raise ValueError("X and centroids must be matrices with the same column count")
    return np.argmin(squared_distances(X, centroids), axis=1)


def update_step(X: np.ndarray, assignments: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster means and member counts; empty clusters get NaN rows."""
    d = X.shape[1]
    sums = np.zeros((k, d))
    np.add.at(sums, assignments, X)
    counts = np.bincount(assignments, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts[:, None]
    return means, counts


def objective(X: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    diff = X - centroids[assignments]
    return float(np.einsum("nd,nd->", diff, diff))


def _distance_ops(n: int, k: int, d: int) -> OpCount:
    return OpCount(adds=n * k * (2 * d - 1), mults=n * k * d)


def kmeans_fit(X: np.ndarray, p: KMeansParams, rng: RngStream) -> KMeansResult:
    """Lloyd's algorithm from k distinct random data points.

    With several restarts the run with the lowest objective is returned
    (earliest on ties) and ``op_count`` / ``extra_ops`` cover all of them.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("kmeans_fit expects a 2-D matrix")
    if X.shape[0] < p.k:
        raise ValueError(f"need at least k={p.k} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("kmeans_fit input contains non-finite values")
    runs = [_lloyd(X, p, rng) for _ in range(p.restarts)]
    best = min(runs, key=lambda r: r.objective)
    if p.restarts == 1:
        return best
    total, extra = OpCount(), OpCount()
    for r in runs:
        total, extra = total + r.op_count, extra + r.extra_ops
    return dataclasses.replace(best, op_count=total, extra_ops=extra)


def _lloyd(X: np.ndarray, p: KMeansParams, rng: RngStream) -> KMeansResult:
    n, d = X.shape
    centroids = X[np.sort(rng.choice(n, p.k, replace=False))].copy()
    ops = OpCount()
    extra = OpCount()
    reseeds = 0
    history: list[float] = []
    iterations = 0
    for _ in range(p.it):
        dist = squared_distances(X, centroids)
        labels = np.argmin(dist, axis=1)
        ops += _distance_ops(n, p.k, d)
        history.append(float(dist[np.arange(n), labels].sum()))

        means, counts = update_step(X, labels, p.k)
        ops += OpCount(adds=n * d)
        iterations += 1
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed each empty cluster at the point farthest from its own centroid
            own = dist[np.arange(n), labels].copy()
            for j in empty:
                far = int(np.argmax(own))
                means[j] = X[far]
                own[far] = -np.inf
                reseeds += 1
            extra += OpCount(adds=n * empty.size)
        centroids = means

        if p.tol > 0 and len(history) > 1:
            prev, cur = history[-2], history[-1]
            if prev <= 0 or (prev - cur) / prev < p.tol:
                break

    labels = assign_step(X, centroids)
    extra += _distance_ops(n, p.k, d)
    return KMeansResult(
        centroids=centroids,
        assignments=labels,
        objective=objective(X, centroids, labels),
        iterations_run=iterations,
        op_count=ops,
        extra_ops=extra,
        reseeds=reseeds,
        history=history,
    )
