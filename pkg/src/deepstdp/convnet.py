"""Small convolutional feature extractor with a removable linear head.

Architecture: a stack of [3x3 conv (padding 1) -> ReLU -> 2x2 max-pool]
blocks, a flatten, one fully-connected feature layer, and a linear
classifier head. Gradients are hand-derived; ``loss_and_grads`` also returns
the squared norm of every sample's own log-likelihood gradient, which the
Fisher-trace metric consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numerics import RngStream
from .tensorfile import atomic_write, read_tensor, write_tensor

HEAD = ("head.w", "head.b")


@dataclass
class NetParams:
    in_shape: tuple[int, int, int]
    channels: tuple[int, ...]
    d_feat: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.tensors["head.w"].shape[0]

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def feature_names(self) -> list[str]:
        return [n for n in self.tensors if n not in HEAD]

    @property
    def num_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "NetParams":
        return NetParams(self.in_shape, self.channels, self.d_feat, {n: t.copy() for n, t in self.tensors.items()})

    def like(self, tensors: dict[str, np.ndarray]) -> "NetParams":
        return NetParams(self.in_shape, self.channels, self.d_feat, tensors)

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    epochs_per_reassign: int = 1
    batch: int = 32
    head_reinit: bool = True
    uniform_sampling: bool = False  # draw each pass evenly over the nonempty pseudo-classes

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.epochs_per_reassign < 1:
            raise ValueError(f"invalid TrainConfig {self}")


@dataclass
class LossGrads:
    loss: float
    grads: NetParams
    per_sample_sq_norms: dict[str, np.ndarray]  # tensor name -> (N,)

    @property
    def per_sample_sq_grad_norm(self) -> np.ndarray:
        return sum(self.per_sample_sq_norms.values())


def _uniform(rng: RngStream, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_params(
    in_shape: tuple[int, int, int],
    k: int,
    rng: RngStream,
    channels: tuple[int, ...] = (8, 16),
    d_feat: int = 64,
) -> NetParams:
    C, H, W = in_shape
    scale = 2 ** len(channels)
    if H % scale or W % scale:
        raise ValueError(f"image size {H}x{W} must be divisible by {scale}")
    tensors: dict[str, np.ndarray] = {}
    c_in = C
    for i, c_out in enumerate(channels, start=1):
        fan_in = c_in * 9
        tensors[f"conv{i}.w"] = _uniform(rng, fan_in, (c_out, c_in, 3, 3))
        tensors[f"conv{i}.b"] = _uniform(rng, fan_in, (c_out,))
        c_in = c_out
    flat = c_in * (H // scale) * (W // scale)
    tensors["fc.w"] = _uniform(rng, flat, (d_feat, flat))
    tensors["fc.b"] = _uniform(rng, flat, (d_feat,))
    params = NetParams(tuple(in_shape), tuple(channels), d_feat, tensors)
    return reinit_head(params, rng, k)


def reinit_head(p: NetParams, rng: RngStream, k: int | None = None) -> NetParams:
    """Fresh head of width ``k`` (default: current width); feature layers are shared, not copied."""
    k = p.k if k is None and "head.w" in p.tensors else k
    tensors = {n: t for n, t in p.tensors.items() if n not in HEAD}
    tensors["head.w"] = _uniform(rng, p.d_feat, (k, p.d_feat))
    tensors["head.b"] = _uniform(rng, p.d_feat, (k,))
    return p.like(tensors)


def sgd_step(p: NetParams, grads: NetParams, lr: float) -> NetParams:
    if grads.tensors.keys() != p.tensors.keys():
        raise ValueError("gradient and parameter tensors differ")
    return p.like({n: t - lr * grads.tensors[n] for n, t in p.tensors.items()})


# -- layer primitives ---------------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, w, 3, 3)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * 9, h * w)


def _col2im(dcols: np.ndarray, shape) -> np.ndarray:
    n, c, h, w = shape
    d = dcols.reshape(n, c, 3, 3, h, w)
    dxp = np.zeros((n, c, h + 2, w + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + w] += d[:, :, di, dj]
    return dxp[:, :, 1:-1, 1:-1]


def _pool(a: np.ndarray):
    n, c, h, w = a.shape
    blocks = a.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def _unpool(g: np.ndarray, idx: np.ndarray, shape) -> np.ndarray:
    n, c, h, w = shape
    blocks = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(blocks, idx[..., None], g[..., None], axis=-1)
    return blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def _as_batch(p: NetParams, images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(p.in_shape):
        raise ValueError(f"expected images of shape (N, {p.in_shape}), got {x.shape}")
    return x


def _forward(p: NetParams, x: np.ndarray):
    caches = []
    for i in range(1, len(p.channels) + 1):
        w, b = p.tensors[f"conv{i}.w"], p.tensors[f"conv{i}.b"]
        n, _, h, wd = x.shape
        cols = _im2col(x)
        z = (np.matmul(w.reshape(w.shape[0], -1), cols) + b[:, None]).reshape(n, w.shape[0], h, wd)
        a = np.maximum(z, 0.0)
        x_next, idx = _pool(a)
        caches.append((x.shape, cols, z, idx))
        x = x_next
    flat = x.reshape(x.shape[0], -1)
    feat = flat @ p.tensors["fc.w"].T + p.tensors["fc.b"]
    return feat, flat, x.shape, caches


def forward_features(p: NetParams, images: np.ndarray) -> np.ndarray:
    """Feature-layer output (head not applied). Accepts one image or a batch."""
    single = np.asarray(images).ndim == 3
    feat = _forward(p, _as_batch(p, images))[0]
    return feat[0] if single else feat


def logits(p: NetParams, images: np.ndarray) -> np.ndarray:
    feat = forward_features(p, _as_batch(p, images))
    return feat @ p.tensors["head.w"].T + p.tensors["head.b"]


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grads(p: NetParams, images: np.ndarray, labels: np.ndarray) -> LossGrads:
    """Mean cross-entropy against ``labels`` and its gradient.

    ``per_sample_sq_norms[name][n]`` is the squared norm of the gradient of
    log p(labels[n] | images[n]) restricted to tensor ``name``.
    """
    x = _as_batch(p, images)
    y = np.asarray(labels, dtype=np.int64).ravel()
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("one label per image is required")
    if y.size and (y.min() < 0 or y.max() >= p.k):
        raise ValueError(f"labels must lie in [0, {p.k})")

    feat, flat, pooled_shape, caches = _forward(p, x)
    hw, hb = p.tensors["head.w"], p.tensors["head.b"]
    logp = log_softmax(feat @ hw.T + hb)
    loss = float(-logp[np.arange(n), y].mean())

    # per-sample output adjoint of the negative log-likelihood
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0

    grads: dict[str, np.ndarray] = {}
    sq: dict[str, np.ndarray] = {}

    grads["head.w"] = delta.T @ feat / n
    grads["head.b"] = delta.mean(axis=0)
    dd = np.einsum("nk,nk->n", delta, delta)
    sq["head.w"] = dd * np.einsum("nf,nf->n", feat, feat)
    sq["head.b"] = dd

    dfeat = delta @ hw
    grads["fc.w"] = dfeat.T @ flat / n
    grads["fc.b"] = dfeat.mean(axis=0)
    df = np.einsum("nf,nf->n", dfeat, dfeat)
    sq["fc.w"] = df * np.einsum("nf,nf->n", flat, flat)
    sq["fc.b"] = df

    g = (dfeat @ p.tensors["fc.w"]).reshape(pooled_shape)
    for i in range(len(p.channels), 0, -1):
        in_shape, cols, z, idx = caches[i - 1]
        w = p.tensors[f"conv{i}.w"]
        dz = _unpool(g, idx, z.shape) * (z > 0)
        dz = dz.reshape(n, w.shape[0], -1)
        per_w = np.matmul(dz, cols.transpose(0, 2, 1))  # (n, c_out, c_in*9)
        per_b = dz.sum(axis=2)
        grads[f"conv{i}.w"] = per_w.mean(axis=0).reshape(w.shape)
        grads[f"conv{i}.b"] = per_b.mean(axis=0)
        sq[f"conv{i}.w"] = np.einsum("nok,nok->n", per_w, per_w)
        sq[f"conv{i}.b"] = np.einsum("no,no->n", per_b, per_b)
        if i > 1:
            dcols = np.matmul(w.reshape(w.shape[0], -1).T, dz)
            g = _col2im(dcols, in_shape)

    ordered = {name: grads[name] for name in p.tensors}
    return LossGrads(loss, p.like(ordered), {name: sq[name] for name in p.tensors})


def balanced_order(labels: np.ndarray, rng: RngStream) -> np.ndarray:
    """N indices drawn evenly across the nonempty classes of ``labels``, shuffled."""
    labels = np.asarray(labels)
    n = len(labels)
    classes = np.unique(labels)
    per = n // len(classes) + 1
    picks = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        picks.append(members[rng.choice(len(members), per, replace=len(members) < per)])
    idx = np.concatenate(picks)
    return idx[rng.permutation(len(idx))][:n]


def train_pass(p: NetParams, images: np.ndarray, labels: np.ndarray, cfg: TrainConfig, rng: RngStream) -> tuple[NetParams, float]:
    """One shuffled minibatch SGD pass; returns new params and mean batch loss."""
    n = images.shape[0]
    order = balanced_order(labels, rng) if cfg.uniform_sampling else rng.permutation(n)
    losses = []
    for start in range(0, n, cfg.batch):
        batch = order[start : start + cfg.batch]
        lg = loss_and_grads(p, images[batch], labels[batch])
        p = sgd_step(p, lg.grads, cfg.lr)
        losses.append(lg.loss)
    return p, float(np.mean(losses))


def save_params(p: NetParams, out_dir) -> None:
    """Write one tensor file per parameter plus an ``arch.txt`` descriptor."""
    out = Path(out_dir)
    for name, t in p.tensors.items():
        write_tensor(out / f"{name}.dstp", t)
    arch = (
        f"in_shape = {','.join(map(str, p.in_shape))}\n"
        f"channels = {','.join(map(str, p.channels))}\n"
        f"d_feat = {p.d_feat}\n"
        f"tensors = {','.join(p.tensors)}\n"
    )
    atomic_write(out / "arch.txt", arch.encode())


def load_params(path) -> NetParams:
    path = Path(path)
    arch_file = path / "arch.txt"
    if not arch_file.is_file():
        raise FileNotFoundError(f"no checkpoint at {path}")
    arch = dict(line.split(" = ", 1) for line in arch_file.read_text().splitlines() if " = " in line)
    in_shape = tuple(int(v) for v in arch["in_shape"].split(","))
    channels = tuple(int(v) for v in arch["channels"].split(","))
    tensors = {name: read_tensor(path / f"{name}.dstp") for name in arch["tensors"].split(",")}
    return NetParams(in_shape, channels, int(arch["d_feat"]), tensors)
