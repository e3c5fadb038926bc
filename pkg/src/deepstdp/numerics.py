"""Random streams and small linear-algebra helpers shared by the rest of the package.

Dense tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

WHITEN_EPS = 1e-8
NORM_EPS = 1e-12


class RngStream:
    """Seeded, reproducible random stream.

    Backed by numpy's PCG64, whose output is identical across platforms for a
    given seed. ``spawn(label)`` derives an independent child stream whose seed
    depends only on the parent seed and the label, never on how much of the
    parent has been consumed.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key)))

    def spawn(self, label: str | int) -> "RngStream":
        digest = hashlib.sha256(str(label).encode()).digest()
        return RngStream(self.seed, self._key + (int.from_bytes(digest[:8], "little"),))

    def restart(self) -> "RngStream":
        """Fresh stream that replays this one's output from the beginning."""
        return RngStream(self.seed, self._key)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def bernoulli(self, p, size=None) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if size is None:
            size = p.shape
        return (self._gen.random(size) < p).astype(np.uint8)

    def integers(self, low: int, high: int | None = None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)


def seeded_rng(seed: int) -> RngStream:
    return RngStream(seed)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (d_out, d_in), orthonormal rows
    eigenvalues: np.ndarray  # (d_out,), nonincreasing
    whiten: bool

    @property
    def d_out(self) -> int:
        return self.components.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T
        if self.whiten:
            Z = Z / np.sqrt(self.eigenvalues + WHITEN_EPS)
        return Z

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if self.whiten:
            Z = Z * np.sqrt(self.eigenvalues + WHITEN_EPS)
        return Z @ self.components + self.mean


def pca_fit(X: np.ndarray, d_out: int, whiten: bool = False) -> PcaModel:
    """Fit PCA on the rows of ``X`` keeping the top ``d_out`` directions.

    Component signs are fixed so the largest-magnitude entry of each row is
    positive, which makes the fit deterministic.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("pca_fit expects a 2-D matrix")
    n, d_in = X.shape
    if n < 2:
        raise ValueError("pca_fit needs at least 2 rows")
    if d_out < 1 or d_out > min(n, d_in):
        raise ValueError(f"d_out={d_out} must lie in [1, min(N, d_in)={min(n, d_in)}]")
    if not np.all(np.isfinite(X)):
        raise ValueError("pca_fit input contains non-finite values")

    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:d_out]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T.copy()
    pivots = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(d_out), pivots])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    return PcaModel(mean=mean, components=comps, eigenvalues=evals, whiten=whiten)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit norm; vectors with norm below 1e-12 map to zero.

    A 2-D input is normalized row by row.
    """
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    out = v / np.maximum(norms, NORM_EPS)
    return np.where(norms < NORM_EPS, 0.0, out)
