"""Winner-take-all LIF network trained by trace-based signed STDP.

The excitatory layer sees every input component through two synapse maps:
``w_plus`` (entries in [0, w_max]) driven by positive-channel spikes and
``w_minus`` (entries in [-w_max, 0]) driven by negative-channel spikes.
Each neuron is one cluster; the most active neuron for a sample is its label.

All per-timestep work happens in ``_step_kernel``. ``step_timestep`` calls it
once, ``simulate_sample`` calls it T times from compiled code, so both paths
share a single implementation of the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numba
import numpy as np

from .cost import SpikeStats
from .encoding import ProcessedFeatures, SpikeTrain, encode
from .numerics import RngStream

# counter slots filled by the kernel
C_INPUT_SPIKES, C_EXC_SPIKES, C_FF_ADDS, C_LEARN_ADDS, C_INH_ADDS = range(5)
N_COUNTERS = 5


@dataclass
class SnnConfig:
    """Network hyperparameters with the customary STDP defaults.

    ``w_max`` bounds the synapse magnitudes, ``weight_norm`` (0 = off) rescales
    every column of w_plus / w_minus to that total after each training sample,
    and ``label_pass`` picks between labeling during training (``inline``) or
    in a second, frozen pass (``separate``).
    """

    k: int = 100
    d: int = 256
    v_rest: float = -65.0
    v_reset: float = -60.0
    v_thr: float = -52.0
    v_decay: float = 20.0
    refractory: int = 5
    tau_o: float = 1.0
    tau_decay: float = 100.0
    alpha: float = 0.45
    eps_decay: float = 1e7
    eta_pre: float = 1e-3
    eta_post: float = 1e-6
    w_inh: float = -1.0
    T: int = 400
    w_max: float = 1.0
    init_scale: float = 0.3
    weight_norm: float = 0.0
    label_pass: str = "separate"

    def __post_init__(self):
        problems = []
        if self.k < 1 or self.d < 1:
            problems.append("k and d must be >= 1")
        if not self.v_reset < self.v_thr:
            problems.append("v_reset must be below v_thr")
        if not self.v_rest <= self.v_reset:
            problems.append("v_rest must not exceed v_reset")
        if self.refractory < 0:
            problems.append("refractory must be >= 0")
        if min(self.v_decay, self.tau_decay, self.eps_decay) <= 0:
            problems.append("decay constants must be > 0")
        if self.eta_pre < 0 or self.eta_post < 0:
            problems.append("learning rates must be >= 0")
        if self.w_inh > 0:
            problems.append("w_inh must be <= 0")
        if self.w_max <= 0:
            problems.append("w_max must be > 0")
        if not 0 < self.init_scale <= 1:
            problems.append("init_scale must lie in (0, 1]")
        if self.weight_norm < 0:
            problems.append("weight_norm must be >= 0")
        if self.T < 1:
            problems.append("T must be >= 1")
        if self.label_pass not in ("inline", "separate"):
            problems.append("label_pass must be 'inline' or 'separate'")
        if problems:
            raise ValueError("invalid SnnConfig: " + "; ".join(problems))

    def kernel_params(self) -> np.ndarray:
        return np.array(
            [
                self.v_rest,
                self.v_reset,
                self.v_thr,
                math.exp(-1.0 / self.v_decay),
                float(self.refractory),
                self.tau_o,
                math.exp(-1.0 / self.tau_decay),
                self.alpha,
                math.exp(-1.0 / self.eps_decay),
                self.eta_pre,
                self.eta_post,
                self.w_inh,
                self.w_max,
            ],
            dtype=np.float64,
        )

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class SnnState:
    w_plus: np.ndarray  # (d, k)
    w_minus: np.ndarray  # (d, k)
    V: np.ndarray  # (k,)
    eps: np.ndarray  # (k,)
    l: np.ndarray  # (k,) int64 refractory counters
    trace_pre_plus: np.ndarray  # (d,)
    trace_pre_minus: np.ndarray  # (d,)
    trace_post: np.ndarray  # (k,)
    counters: np.ndarray = field(default_factory=lambda: np.zeros(N_COUNTERS, dtype=np.int64))

    @property
    def d(self) -> int:
        return self.w_plus.shape[0]

    @property
    def k(self) -> int:
        return self.w_plus.shape[1]

    def copy(self) -> "SnnState":
        return SnnState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def combined_weights(self) -> np.ndarray:
        return self.w_plus + self.w_minus

    def reset_dynamics(self, cfg: SnnConfig) -> None:
        self.V[:] = cfg.v_rest
        self.l[:] = 0
        self.trace_pre_plus[:] = 0.0
        self.trace_pre_minus[:] = 0.0
        self.trace_post[:] = 0.0


@dataclass(frozen=True)
class SampleActivity:
    spike_counts: np.ndarray
    final_V: np.ndarray
    winner: int


@dataclass(frozen=True)
class PseudoLabels:
    labels: np.ndarray  # (N,) int64 in [0, k)
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or (lab.size and (lab.min() < 0 or lab.max() >= self.k)):
            raise ValueError(f"pseudo-labels must be a vector with entries in [0, {self.k})")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class PairSTDPParams:
    A_plus: float
    A_minus: float
    beta_plus: float
    beta_minus: float

    def __post_init__(self):
        if min(self.A_plus, self.A_minus, self.beta_plus, self.beta_minus) <= 0:
            raise ValueError("pair STDP parameters must all be > 0")


def pair_stdp_kernel(dt: float, p: PairSTDPParams) -> float:
    """Weight change for a single pre/post pair; ``dt`` is t_post - t_pre."""
    if dt == 0:
        raise ValueError("pair STDP kernel is undefined at dt = 0")
    if dt > 0:
        return p.A_plus * math.exp(-dt / p.beta_plus)
    return -p.A_minus * math.exp(dt / p.beta_minus)


def init_network(cfg: SnnConfig, rng: RngStream) -> SnnState:
    hi = cfg.init_scale * cfg.w_max
    w_plus = rng.uniform(0.0, hi, (cfg.d, cfg.k))
    w_minus = -rng.uniform(0.0, hi, (cfg.d, cfg.k))
    return SnnState(
        w_plus=w_plus,
        w_minus=w_minus,
        V=np.full(cfg.k, cfg.v_rest),
        eps=np.zeros(cfg.k),
        l=np.zeros(cfg.k, dtype=np.int64),
        trace_pre_plus=np.zeros(cfg.d),
        trace_pre_minus=np.zeros(cfg.d),
        trace_post=np.zeros(cfg.k),
    )


@numba.njit(cache=True)
def _step_kernel(w_plus, w_minus, V, eps, l, tp, tm, tpost, s_plus, s_minus, prm, learn, adapt, spikes, counters):
    d, k = w_plus.shape
    v_rest, v_reset, v_thr, v_dec = prm[0], prm[1], prm[2], prm[3]
    L, tau_o, tr_dec, alpha, eps_dec = int(prm[4]), prm[5], prm[6], prm[7], prm[8]
    eta_pre, eta_post, w_inh, w_max = prm[9], prm[10], prm[11], prm[12]

    # pre traces: jump to peak on a spike, then every trace decays
    n_in = 0
    for i in range(d):
        if s_plus[i]:
            tp[i] = tau_o
            n_in += 1
        if s_minus[i]:
            tm[i] = tau_o
            n_in += 1
        tp[i] *= tr_dec
        tm[i] *= tr_dec
    for j in range(k):
        tpost[j] *= tr_dec
        if adapt:
            eps[j] *= eps_dec
        V[j] = v_rest + v_dec * (V[j] - v_rest)
        if l[j] > 0:
            l[j] -= 1

    # feed-forward drive onto non-refractory neurons
    n_open = 0
    for j in range(k):
        if l[j] == 0:
            n_open += 1
    for i in range(d):
        if s_plus[i]:
            for j in range(k):
                if l[j] == 0:
                    V[j] += w_plus[i, j]
        if s_minus[i]:
            for j in range(k):
                if l[j] == 0:
                    V[j] += w_minus[i, j]

    n_fire = 0
    for j in range(k):
        if l[j] == 0 and V[j] > v_thr + eps[j]:
            spikes[j] = 1
            n_fire += 1
            l[j] = L
            V[j] = v_reset
            if adapt:
                eps[j] += alpha
            tpost[j] = tau_o
        else:
            spikes[j] = 0

    if learn:
        for i in range(d):
            if s_plus[i]:
                for j in range(k):
                    w_plus[i, j] -= eta_pre * tpost[j]
            if s_minus[i]:
                for j in range(k):
                    w_minus[i, j] += eta_pre * tpost[j]
        if n_fire > 0:
            for i in range(d):
                for j in range(k):
                    if spikes[j]:
                        w_plus[i, j] += eta_post * tp[i]
                        w_minus[i, j] += eta_post * tm[i]
        for i in range(d):
            touched = s_plus[i] or s_minus[i] or n_fire > 0
            if touched:
                for j in range(k):
                    w = w_plus[i, j]
                    w_plus[i, j] = 0.0 if w < 0.0 else (w_max if w > w_max else w)
                    w = w_minus[i, j]
                    w_minus[i, j] = -w_max if w < -w_max else (0.0 if w > 0.0 else w)
        counters[3] += n_in * k + n_fire * d

    # lateral inhibition from every firing neuron onto all others
    if n_fire > 0:
        for j in range(k):
            V[j] += w_inh * (n_fire - spikes[j])

    counters[0] += n_in
    counters[1] += n_fire
    counters[2] += n_in * n_open
    counters[4] += n_fire * (k - 1)


@numba.njit(cache=True)
def _run_sample(w_plus, w_minus, V, eps, l, tp, tm, tpost, S_plus, S_minus, prm, learn, adapt, counts, counters):
    k = V.shape[0]
    V[:] = prm[0]
    l[:] = 0
    tp[:] = 0.0
    tm[:] = 0.0
    tpost[:] = 0.0
    counts[:] = 0
    spikes = np.zeros(k, dtype=np.uint8)
    for t in range(S_plus.shape[0]):
        _step_kernel(w_plus, w_minus, V, eps, l, tp, tm, tpost, S_plus[t], S_minus[t], prm, learn, adapt, spikes, counters)
        for j in range(k):
            counts[j] += spikes[j]


def _check_dims(state: SnnState, cfg: SnnConfig, d: int) -> None:
    if state.w_plus.shape != (cfg.d, cfg.k) or state.w_minus.shape != (cfg.d, cfg.k):
        raise ValueError(f"state weights {state.w_plus.shape} do not match config (d={cfg.d}, k={cfg.k})")
    if d != cfg.d:
        raise ValueError(f"input dimension {d} does not match config d={cfg.d}")


def step_timestep(state: SnnState, s_plus, s_minus, cfg: SnnConfig, learn: bool = True, adapt: bool = True) -> np.ndarray:
    """Advance the network one timestep in place and return the output spikes."""
    s_plus = np.ascontiguousarray(s_plus, dtype=np.uint8)
    s_minus = np.ascontiguousarray(s_minus, dtype=np.uint8)
    if s_plus.shape != s_minus.shape or s_plus.ndim != 1:
        raise ValueError("s_plus and s_minus must be vectors of equal length")
    _check_dims(state, cfg, s_plus.shape[0])
    spikes = np.zeros(cfg.k, dtype=np.uint8)
    _step_kernel(
        state.w_plus, state.w_minus, state.V, state.eps, state.l,
        state.trace_pre_plus, state.trace_pre_minus, state.trace_post,
        s_plus, s_minus, cfg.kernel_params(), learn, adapt, spikes, state.counters,
    )
    return spikes


def pick_winner(spike_counts: np.ndarray, final_V: np.ndarray) -> int:
    """Most spikes wins; ties go to the higher final potential, then the lower index."""
    idx = np.arange(len(spike_counts))
    order = np.lexsort((idx, -final_V, -spike_counts))
    return int(order[0])


def simulate_sample(state: SnnState, train: SpikeTrain, cfg: SnnConfig, learn: bool = True, adapt: bool = True) -> SampleActivity:
    """Present one encoded sample for T steps, starting from a reset membrane.

    Weights and adaptive thresholds carry over between samples; potentials,
    refractory counters and traces do not.
    """
    if train.T != cfg.T:
        raise ValueError(f"spike train has T={train.T}, config expects T={cfg.T}")
    _check_dims(state, cfg, train.s_plus.shape[1])
    counts = np.zeros(cfg.k, dtype=np.int64)
    _run_sample(
        state.w_plus, state.w_minus, state.V, state.eps, state.l,
        state.trace_pre_plus, state.trace_pre_minus, state.trace_post,
        np.ascontiguousarray(train.s_plus, dtype=np.uint8),
        np.ascontiguousarray(train.s_minus, dtype=np.uint8),
        cfg.kernel_params(), learn, adapt, counts, state.counters,
    )
    final_V = state.V.copy()
    return SampleActivity(counts, final_V, pick_winner(counts, final_V))


def normalize_columns(state: SnnState, total: float) -> None:
    """Rescale each neuron's synapses so each map's column sums to +/- total."""
    for w, sign in ((state.w_plus, 1.0), (state.w_minus, -1.0)):
        sums = np.abs(w).sum(axis=0)
        scale = np.where(sums > 0, total / np.maximum(sums, 1e-300), 1.0)
        w *= scale
        if sign > 0:
            np.clip(w, 0.0, None, out=w)
        else:
            np.clip(w, None, 0.0, out=w)


def cluster_epoch(
    features: ProcessedFeatures | np.ndarray,
    cfg: SnnConfig,
    gain: float,
    rng: RngStream,
) -> tuple[PseudoLabels, SnnState, SpikeStats]:
    """Train a fresh network on every sample once and label each sample.

    With ``label_pass='separate'`` the labels come from a second pass over the
    data with frozen weights and thresholds. That pass encodes every sample
    from the same copy of one random stream, so identical features always get
    identical labels. The returned SpikeStats describe the training pass.
    """
    X = features.X if isinstance(features, ProcessedFeatures) else np.asarray(features, dtype=np.float64)
    n, d = X.shape
    if d != cfg.d:
        raise ValueError(f"features have d={d}, config expects d={cfg.d}")
    state = init_network(cfg, rng.spawn("init"))
    train_rng = rng.spawn("train")
    labels = np.zeros(n, dtype=np.int64)
    for idx in range(n):
        act = simulate_sample(state, encode(X[idx], gain, cfg.T, train_rng), cfg, learn=True, adapt=True)
        labels[idx] = act.winner
        if cfg.weight_norm > 0:
            normalize_columns(state, cfg.weight_norm)
    c = state.counters.copy()
    stats = SpikeStats(
        p_input=float(c[C_INPUT_SPIKES]) / (n * cfg.T * d),
        p_exc=float(c[C_EXC_SPIKES]) / (n * cfg.T * cfg.k),
        w_exc_count=d * cfg.k,
        w_inh_count=cfg.k * (cfg.k - 1),
        counted_adds=int(c[C_FF_ADDS] + c[C_LEARN_ADDS] + c[C_INH_ADDS]),
        timesteps=cfg.T,
        samples=n,
    )
    if cfg.label_pass == "separate":
        labels = label_samples(state, X, cfg, gain, rng.spawn("label"))
    return PseudoLabels(labels, cfg.k), state, stats


def label_samples(state: SnnState, X: np.ndarray, cfg: SnnConfig, gain: float, rng: RngStream) -> np.ndarray:
    """Winner per sample with weights and thresholds frozen; state is not modified."""
    frozen = state.copy()
    labels = np.zeros(X.shape[0], dtype=np.int64)
    for idx in range(X.shape[0]):
        train = encode(X[idx], gain, cfg.T, rng.restart())
        labels[idx] = simulate_sample(frozen, train, cfg, learn=False, adapt=False).winner
    return labels


def clustering_objective(features: ProcessedFeatures | np.ndarray, state: SnnState, labels: PseudoLabels | np.ndarray) -> float:
    """Mean L1 distance between each sample and its neuron's combined weight column."""
    X = features.X if isinstance(features, ProcessedFeatures) else np.asarray(features, dtype=np.float64)
    lab = labels.labels if isinstance(labels, PseudoLabels) else np.asarray(labels)
    W = state.combined_weights()
    if X.shape[1] != W.shape[0] or X.shape[0] != lab.shape[0]:
        raise ValueError("features, weights and labels have inconsistent shapes")
    return float(np.abs(X - W[:, lab].T).sum(axis=1).mean())
