"""Clustering and representation metrics: NMI, purity, Fisher trace, linear probe."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import convnet
from .numerics import RngStream


def contingency_table(y_a, y_b) -> np.ndarray:
    y_a, y_b = np.asarray(y_a).ravel(), np.asarray(y_b).ravel()
    if y_a.shape != y_b.shape:
        raise ValueError(f"assignment lengths differ: {y_a.size} vs {y_b.size}")
    _, ia = np.unique(y_a, return_inverse=True)
    _, ib = np.unique(y_b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(y_a, y_b) -> float:
    """Mutual information over the geometric mean of the entropies (natural log).

    If either partition has zero entropy the value is 1 when both partitions
    are identical (up to relabeling) and 0 otherwise.
    """
    table = contingency_table(y_a, y_b)
    n = int(table.sum())
    if n == 0:
        raise ValueError("nmi needs at least one sample")
    h_a = _entropy(table.sum(axis=1), n)
    h_b = _entropy(table.sum(axis=0), n)
    if h_a == 0.0 or h_b == 0.0:
        same = table.shape[0] == table.shape[1] and np.count_nonzero(table) == table.shape[0]
        return 1.0 if same else 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float((pij * np.log(pij / outer)).sum())
    return float(min(1.0, max(0.0, mi / np.sqrt(h_a * h_b))))


def purity(y, truth) -> float:
    table = contingency_table(y, truth)
    if table.size == 0:
        raise ValueError("purity needs at least one sample")
    return float(table.max(axis=1).sum() / table.sum())


def fim_trace(
    p: convnet.NetParams,
    images: np.ndarray,
    labels,
    layers: list[str] | None = None,
    sample_labels: bool = False,
    rng: RngStream | None = None,
    chunk: int = 256,
) -> float:
    """Empirical Fisher trace: mean squared norm of per-sample log-likelihood gradients.

    By default the gradient is taken at the given (pseudo-)labels. With
    ``sample_labels`` the label of each sample is drawn from the model's own
    predictive distribution instead. ``layers`` restricts the sum to the named
    parameter tensors.
    """
    labels = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    images = np.asarray(images, dtype=np.float64)
    if sample_labels:
        if rng is None:
            raise ValueError("sample_labels requires an rng")
        probs = np.exp(convnet.log_softmax(convnet.logits(p, images)))
        u = rng.random(len(images))
        labels = np.minimum((probs.cumsum(axis=1) < u[:, None]).sum(axis=1), p.k - 1)
    names = p.names if layers is None else list(layers)
    unknown = set(names) - set(p.names)
    if unknown:
        raise ValueError(f"unknown parameter tensors: {sorted(unknown)}")
    total = 0.0
    for start in range(0, len(images), chunk):
        sl = slice(start, start + chunk)
        lg = convnet.loss_and_grads(p, images[sl], labels[sl])
        total += float(sum(lg.per_sample_sq_norms[n].sum() for n in names))
    return total / len(images)


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 100
    lr: float = 0.01
    batch: int = 32
    train_fraction: float = 0.8
    standardize: bool = True
    seed: int = 0


def linear_probe(features: np.ndarray, truth, cfg: ProbeConfig = ProbeConfig()) -> float:
    """Train softmax regression on frozen features; return held-out top-1 accuracy.

    The data are split by a seeded shuffle. Features are standardized with
    statistics of the training split only.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(truth, dtype=np.int64).ravel()
    classes, y = np.unique(y, return_inverse=True)
    c = len(classes)
    if c < 2:
        raise ValueError("linear probe needs at least two classes")
    if X.shape[0] != y.shape[0] or X.shape[0] < c:
        raise ValueError("need one label per row and at least as many rows as classes")

    rng = RngStream(cfg.seed)
    order = rng.permutation(len(y))
    n_train = int(round(cfg.train_fraction * len(y)))
    n_train = min(max(n_train, 1), len(y) - 1)
    tr, ev = order[:n_train], order[n_train:]
    if cfg.standardize:
        mu = X[tr].mean(axis=0)
        sd = X[tr].std(axis=0)
        X = (X - mu) / np.where(sd > 1e-12, sd, 1.0)

    W = np.zeros((X.shape[1], c))
    b = np.zeros(c)
    Xtr, ytr = X[tr], y[tr]
    for _ in range(cfg.epochs):
        perm = rng.permutation(len(tr))
        for start in range(0, len(tr), cfg.batch):
            idx = perm[start : start + cfg.batch]
            xb = Xtr[idx]
            prob = np.exp(convnet.log_softmax(xb @ W + b))
            prob[np.arange(len(idx)), ytr[idx]] -= 1.0
            W -= cfg.lr * xb.T @ prob / len(idx)
            b -= cfg.lr * prob.mean(axis=0)
    pred = np.argmax(X[ev] @ W + b, axis=1)
    return float((pred == y[ev]).mean())
