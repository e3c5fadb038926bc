"""Deterministic synthetic datasets: Gaussian blobs and oriented-grating images."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .numerics import RngStream
from .tensorfile import atomic_write, read_tensor, write_tensor


@dataclass(frozen=True)
class SynthSpec:
    classes: int = 5
    per_class: int = 100
    kind: str = "images"  # "blobs" or "images"
    d: int = 16
    height: int = 16
    width: int = 16
    sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2 or self.per_class < 1:
            raise ValueError("need classes >= 2 and per_class >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind not in ("blobs", "images"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class Dataset:
    data: np.ndarray  # (N, d) features or (N, 1, H, W) images
    labels: np.ndarray  # (N,) int
    kind: str

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> int:
        return int(np.unique(self.labels).size)


def make_blobs(spec: SynthSpec) -> Dataset:
    rng = RngStream(spec.seed)
    centers = rng.normal(size=(spec.classes, spec.d))
    y = np.repeat(np.arange(spec.classes), spec.per_class)
    X = centers[y] + spec.sigma * rng.normal(size=(len(y), spec.d))
    order = rng.permutation(len(y))
    return Dataset(X[order], y[order], "blobs")


def grating(h: int, w: int, theta: float, freq: float, phase: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.cos(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)


def make_images(spec: SynthSpec) -> Dataset:
    """One grating orientation per class; phase jitter and pixel noise both scale with sigma.

    Every image is standardized to zero mean and unit variance.
    """
    rng = RngStream(spec.seed)
    h, w = spec.height, spec.width
    base_phase = rng.uniform(0, 2 * np.pi, spec.classes)
    y = np.repeat(np.arange(spec.classes), spec.per_class)
    imgs = np.empty((len(y), 1, h, w))
    for n, c in enumerate(y):
        theta = np.pi * c / spec.classes
        phase = base_phase[c] + spec.sigma * np.pi * rng.normal()
        img = grating(h, w, theta, 0.2, phase) + spec.sigma * rng.normal(size=(h, w))
        sd = img.std()
        imgs[n, 0] = (img - img.mean()) / (sd if sd > 1e-12 else 1.0)
    order = rng.permutation(len(y))
    return Dataset(imgs[order], y[order], "images")


def generate(spec: SynthSpec) -> Dataset:
    return make_blobs(spec) if spec.kind == "blobs" else make_images(spec)


def data_filename(kind: str) -> str:
    return "features.dstp" if kind == "blobs" else "images.dstp"


def save_dataset(ds: Dataset, out_dir, spec: SynthSpec | None = None) -> None:
    out = Path(out_dir)
    write_tensor(out / data_filename(ds.kind), ds.data.astype(np.float64))
    write_tensor(out / "labels.dstp", ds.labels.astype(np.int32))
    lines = [f"kind = {ds.kind}", f"samples = {len(ds)}", f"classes = {ds.classes}"]
    if spec is not None:
        lines += [f"{k} = {v}" for k, v in asdict(spec).items() if k not in ("kind", "classes")]
    atomic_write(out / "manifest.txt", ("\n".join(lines) + "\n").encode())


def load_dataset(path) -> Dataset:
    """Load a dataset directory written by ``save_dataset``."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory {path} not found")
    for kind in ("images", "blobs"):
        f = path / data_filename(kind)
        if f.exists():
            return Dataset(read_tensor(f).astype(np.float64), read_tensor(path / "labels.dstp").astype(np.int64), kind)
    raise FileNotFoundError(f"no images.dstp or features.dstp in {path}")
