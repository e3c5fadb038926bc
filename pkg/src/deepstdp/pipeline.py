"""Deep clustering loop: features -> PCA/l2 -> pseudo-labels -> network training.

The clustering back end is either the STDP network (a fresh one every
epoch) or Lloyd's k-means. The training path only ever sees images and
pseudo-labels; ground truth enters solely through the ``evaluate`` callback
used for the linear probe.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from . import convnet, metrics
from .convnet import NetParams, TrainConfig
from .cost import EnergyReport, SpikeStats, kmeans_energy, stdp_energy
from .encoding import ProcessedFeatures, preprocess
from .kmeans import KMeansParams, kmeans_fit
from .metrics import ProbeConfig
from .numerics import RngStream
from .snn import PseudoLabels, SnnConfig, cluster_epoch, clustering_objective

SECTIONS = ("snn", "kmeans", "train", "probe")
DEFAULT_REASSIGN = {"stdp": 1, "kmeans": 2}


@dataclass
class RunConfig:
    method: str = "stdp"
    epochs: int = 20
    reassign_freq: int = 0  # 0 picks the method default
    cluster_multiple: int = 10
    gain: float = 1.0
    d_pca: int = 32
    whiten: bool = False
    d_feat: int = 64
    seed: int = 0
    probe_every: int = 5
    snn: SnnConfig = field(default_factory=SnnConfig)
    kmeans: KMeansParams = field(default_factory=KMeansParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)

    def __post_init__(self):
        if self.method not in DEFAULT_REASSIGN:
            raise ValueError(f"method must be 'stdp' or 'kmeans', got {self.method!r}")
        if self.epochs < 1 or self.cluster_multiple < 1 or self.reassign_freq < 0:
            raise ValueError("epochs and cluster_multiple must be >= 1, reassign_freq >= 0")
        if self.d_pca < 1 or self.d_feat < 1 or self.gain < 0 or self.probe_every < 0:
            raise ValueError("d_pca and d_feat must be >= 1, gain and probe_every >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def passes(self) -> int:
        return self.reassign_freq or DEFAULT_REASSIGN[self.method]


@dataclass
class ClusterOutcome:
    labels: PseudoLabels
    objective: float
    energy: EnergyReport
    spike_stats: SpikeStats | None = None


@dataclass
class EpochRecord:
    epoch: int
    nmi_prev: float | None
    fim_trace: float
    objective: float
    energy_mj: float
    wall_ms: float | None = None
    probe_acc: float | None = None
    p_input: float | None = None
    p_exc: float | None = None
    train_loss: float | None = None

    def to_json(self) -> str:
        out = {
            "epoch": self.epoch,
            "nmi_prev": self.nmi_prev,
            "fim_trace": self.fim_trace,
            "objective": self.objective,
            "energy_mj": self.energy_mj,
            "wall_ms": self.wall_ms,
        }
        for opt in ("probe_acc", "p_input", "p_exc"):
            if getattr(self, opt) is not None:
                out[opt] = getattr(self, opt)
        return json.dumps(out)


@dataclass
class RunLog:
    records: list[EpochRecord] = field(default_factory=list)
    labels: list[np.ndarray] = field(default_factory=list)
    params: NetParams | None = None

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)


def cluster_features(features: ProcessedFeatures, cfg: RunConfig, k: int, rng: RngStream) -> ClusterOutcome:
    n, d = features.X.shape
    if cfg.method == "stdp":
        snn_cfg = dataclasses.replace(cfg.snn, k=k, d=d)
        labels, state, stats = cluster_epoch(features, snn_cfg, cfg.gain, rng)
        return ClusterOutcome(labels, clustering_objective(features, state, labels), stdp_energy(stats, snn_cfg.T, n), stats)
    params = dataclasses.replace(cfg.kmeans, k=k)
    res = kmeans_fit(features.X, params, rng)
    return ClusterOutcome(PseudoLabels(res.assignments, k), res.objective, kmeans_energy(k, d, res.iterations_run, n))


def generate_pseudo_labels(features: ProcessedFeatures, cfg: RunConfig, rng: RngStream, k: int | None = None) -> PseudoLabels:
    """Cluster features with the configured back end; label space has size k."""
    k = k if k is not None else (cfg.snn.k if cfg.method == "stdp" else cfg.kmeans.k)
    return cluster_features(features, cfg, k, rng).labels


Evaluator = Callable[[np.ndarray], float]


def run_deep_cluster(
    cfg: RunConfig,
    images: np.ndarray,
    n_classes: int,
    evaluate: Evaluator | None = None,
    sink: TextIO | None = None,
    record_time: bool = False,
    params: NetParams | None = None,
) -> RunLog:
    """Run the alternating clustering / training loop for ``cfg.epochs`` epochs.

    ``evaluate`` receives the frozen feature-layer outputs (before PCA) and
    returns a probe accuracy; it is called every ``probe_every`` epochs and
    on the last epoch. Each finished epoch is written to ``sink`` as a JSON
    line immediately, so a failing run leaves its partial log behind.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or len(images) == 0:
        raise ValueError("images must be a nonempty (N, C, H, W) array")
    k = cfg.cluster_multiple * n_classes
    if k > len(images):
        raise ValueError(f"{k} clusters requested for {len(images)} images")
    root = RngStream(cfg.seed)
    if params is None:
        params = convnet.init_params(images.shape[1:], k, root.spawn("net"), d_feat=cfg.d_feat)
    d_pca = min(cfg.d_pca, cfg.d_feat, len(images))
    log = RunLog()
    prev = None
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        ep_rng = root.spawn(f"epoch{epoch}")
        feats = convnet.forward_features(params, images)
        processed = preprocess(feats, d_pca, cfg.whiten)

        energy = EnergyReport(0, 0)
        outcome = None
        for r in range(cfg.passes):
            outcome = cluster_features(processed, cfg, k, ep_rng.spawn(f"cluster{r}"))
            energy = energy + outcome.energy
        labels = outcome.labels.labels

        if cfg.train.head_reinit or params.k != k:
            params = convnet.reinit_head(params, ep_rng.spawn("head"), k)
        train_rng = ep_rng.spawn("sgd")
        loss = 0.0
        for _ in range(cfg.train.epochs_per_reassign):
            params, loss = convnet.train_pass(params, images, labels, cfg.train, train_rng)

        rec = EpochRecord(
            epoch=epoch,
            nmi_prev=None if prev is None else metrics.nmi(prev, labels),
            fim_trace=metrics.fim_trace(params, images, labels),
            objective=outcome.objective,
            energy_mj=energy.energy_mj,
            train_loss=loss,
        )
        if outcome.spike_stats is not None:
            rec.p_input = outcome.spike_stats.p_input
            rec.p_exc = outcome.spike_stats.p_exc
        if evaluate is not None and (epoch == cfg.epochs or (cfg.probe_every and epoch % cfg.probe_every == 0)):
            rec.probe_acc = float(evaluate(convnet.forward_features(params, images)))
        if record_time:
            rec.wall_ms = (time.perf_counter() - t0) * 1e3
        log.records.append(rec)
        log.labels.append(labels)
        if sink is not None:
            sink.write(rec.to_json() + "\n")
            sink.flush()
        prev = labels
    log.params = params
    return log


def probe_evaluator(truth: np.ndarray, cfg: ProbeConfig) -> Evaluator:
    truth = np.asarray(truth)
    return lambda feats: metrics.linear_probe(feats, truth, cfg)
