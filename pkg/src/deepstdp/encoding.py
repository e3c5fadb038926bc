"""Feature preprocessing and signed Poisson rate coding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import PcaModel, RngStream, l2_normalize, pca_fit


@dataclass(frozen=True)
class ProcessedFeatures:
    X: np.ndarray  # (N, d), rows unit-norm or exactly zero
    pca: PcaModel | None = None

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class SpikeTrain:
    s_plus: np.ndarray  # (T, d) uint8
    s_minus: np.ndarray  # (T, d) uint8

    @property
    def T(self) -> int:
        return self.s_plus.shape[0]

    @classmethod
    def empty(cls, T: int, d: int) -> "SpikeTrain":
        z = np.zeros((T, d), dtype=np.uint8)
        return cls(z, z.copy())


def preprocess(raw: np.ndarray, d_pca: int, whiten: bool = False) -> ProcessedFeatures:
    """PCA-reduce each row to ``d_pca`` dimensions, then l2-normalize it."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValueError("preprocess needs a matrix with at least 2 rows")
    model = pca_fit(raw, d_pca, whiten=whiten)
    return ProcessedFeatures(l2_normalize(model.transform(raw)), model)


def spike_probabilities(f: np.ndarray, gain: float) -> np.ndarray:
    return np.minimum(1.0, np.abs(f) * gain)


def encode(f: np.ndarray, gain: float, T: int, rng: RngStream) -> SpikeTrain:
    """Rate-code ``f`` as T Bernoulli timesteps per component.

    Positive components spike on ``s_plus``, negative ones on ``s_minus``.
    Exactly T*d uniforms are consumed regardless of ``f``, so a larger |f_i|
    can only add spikes for a given stream state.
    """
    f = np.asarray(f, dtype=np.float64)
    if not np.isfinite(gain) or gain < 0:
        raise ValueError(f"gain must be finite and >= 0, got {gain}")
    if not np.all(np.isfinite(f)):
        raise ValueError("cannot encode non-finite features")
    if T < 1:
        raise ValueError("T must be >= 1")
    p = spike_probabilities(f, gain)
    fire = rng.random((T, f.shape[0])) < p
    s_plus = (fire & (f > 0)).astype(np.uint8)
    s_minus = (fire & (f < 0)).astype(np.uint8)
    return SpikeTrain(s_plus, s_minus)
