import dataclasses
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepstdp.config import load_config
from deepstdp.cost import EnergyReport, SpikeStats, kmeans_energy, measure_spike_stats, solve_p_input, stdp_energy
from deepstdp.encoding import preprocess
from deepstdp.numerics import RngStream
from deepstdp.snn import SnnConfig, cluster_epoch
from deepstdp.synth import SynthSpec, generate

# reference activity: 0.19% excitatory spiking, 256-d input, 100 neurons, 5000 samples
P_EXC, W_EXC, W_INH, T, N = 0.0019, 25600, 9900, 400, 5000
P_INPUT = 0.59916  # back-solved from 55.34 mJ, see test_inversion_oracle


def test_unity_formula():
    r = kmeans_energy(1, 1, 1, 1)
    assert (r.mults, r.adds) == (1, 2)
    assert r.energy_pj == pytest.approx(2 * 0.9 + 3.7)


def test_kmeans_golden():
    r = kmeans_energy(100, 256, 20, 5000)
    assert isinstance(r.adds, int) and r.mults == 100 * 256 * 20 * 5000
    assert r.energy_mj == pytest.approx(14.1, rel=5e-3)
    assert r.scaled(175).energy_mj == pytest.approx(2467.5, rel=5e-3)


def test_inversion_oracle():
    # adds/step = 2*p*|w_exc| + p_exc*(|w_exc| + |w_inh|); solve for p at 55.34 mJ by hand
    adds_per_step = 55.34e9 / 0.9 / (T * N)
    by_hand = (adds_per_step - P_EXC * (W_EXC + W_INH)) / (2 * W_EXC)
    assert by_hand == pytest.approx(0.5992, abs=1e-4)
    assert solve_p_input(55.34, P_EXC, W_EXC, W_INH, T, N) == pytest.approx(by_hand, rel=1e-12)


def test_stdp_golden():
    r = stdp_energy(SpikeStats(P_INPUT, P_EXC, W_EXC, W_INH), T, N)
    assert r.mults == 0
    assert r.energy_mj == pytest.approx(55.34, rel=1e-2)
    assert r.scaled(50).energy_mj == pytest.approx(2767.2, rel=1e-2)


def test_silent_network_costs_nothing():
    assert stdp_energy(SpikeStats(0.0, 0.0, W_EXC, W_INH), T, N).energy_pj == 0.0


@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 20), st.integers(1, 100), st.sampled_from(["k", "d", "it", "N"]))
def test_kmeans_monotone(k, d, it, n, which):
    args = dict(k=k, d=d, it=it, N=n)
    bigger = dict(args, **{which: args[which] + 1})
    assert kmeans_energy(**bigger).energy_pj >= kmeans_energy(**args).energy_pj


@given(
    st.floats(0, 0.9), st.floats(0, 0.9), st.integers(0, 1000), st.integers(0, 1000),
    st.sampled_from(["p_input", "p_exc", "w_exc_count", "w_inh_count"]),
)
def test_stdp_monotone(p_in, p_exc, w_exc, w_inh, which):
    s = SpikeStats(p_in, p_exc, w_exc, w_inh)
    step = 0.1 if which.startswith("p_") else 7
    t = dataclasses.replace(s, **{which: getattr(s, which) + step})
    assert stdp_energy(t, 10, 10).energy_pj >= stdp_energy(s, 10, 10).energy_pj
    assert stdp_energy(s, 11, 10).energy_pj >= stdp_energy(s, 10, 10).energy_pj


def test_report_arithmetic():
    a, b = EnergyReport(10, 2), EnergyReport(5, 1)
    assert (a + b).adds == 15 and (a + b).mults == 3
    assert a.to_dict()["energy_pj"] == pytest.approx(10 * 0.9 + 2 * 3.7)
    with pytest.raises(ValueError):
        EnergyReport(-1, 0)
    with pytest.raises(ValueError):
        SpikeStats(1.5, 0.0, 1, 1)
    with pytest.raises(ValueError):
        kmeans_energy(0, 1, 1, 1)


def _run(X, gain, cfg):
    return measure_spike_stats(cluster_epoch(X, cfg, gain, RngStream(0))[2])


def test_measured_zero_features():
    cfg = SnnConfig(k=5, d=4, T=30)
    s = _run(np.zeros((6, 4)), 1.0, cfg)
    assert s.p_input == 0.0 and s.w_exc_count == 20 and s.w_inh_count == 20


def test_measured_saturated_encoder():
    cfg = SnnConfig(k=5, d=4, T=30)
    X = np.random.default_rng(0).normal(size=(6, 4))
    assert _run(X, 1e6, cfg).p_input == 1.0


def test_counter_matches_formula():
    cfg = load_config(Path(__file__).parents[1] / "configs" / "blobs_reference.cfg")
    ds = generate(SynthSpec(classes=3, per_class=100, kind="blobs", d=16, sigma=0.05, seed=0))
    feats = preprocess(ds.data, cfg.d_pca)
    stats = _run(feats, cfg.gain, cfg.snn)
    formula = stdp_energy(stats, stats.timesteps, stats.samples).adds
    assert stats.p_exc > 0 and stats.p_input > 0
    assert abs(stats.counted_adds - formula) / formula < 0.05
