"""Operation-count energy model for the two clustering back ends.

Operations are priced with 45 nm CMOS float energies: 0.9 pJ per ADD and
3.7 pJ per MULT. Spike-driven work is pure accumulation, so the STDP model
has no multiplications.
"""

from __future__ import annotations

from dataclasses import dataclass

ADD_PJ = 0.9
MULT_PJ = 3.7
PJ_PER_MJ = 1e9


@dataclass(frozen=True)
class EnergyReport:
    adds: int | float
    mults: int | float

    def __post_init__(self):
        if self.adds < 0 or self.mults < 0:
            raise ValueError("operation counts must be nonnegative")

    @property
    def energy_pj(self) -> float:
        return self.adds * ADD_PJ + self.mults * MULT_PJ

    @property
    def energy_mj(self) -> float:
        return self.energy_pj / PJ_PER_MJ

    def scaled(self, times: int | float) -> "EnergyReport":
        return EnergyReport(self.adds * times, self.mults * times)

    def __add__(self, other: "EnergyReport") -> "EnergyReport":
        return EnergyReport(self.adds + other.adds, self.mults + other.mults)

    def to_dict(self) -> dict:
        return {"adds": self.adds, "mults": self.mults, "energy_pj": self.energy_pj, "energy_mj": self.energy_mj}


@dataclass(frozen=True)
class SpikeStats:
    """Average spiking activity of one STDP clustering run.

    ``counted_adds`` is the instrumented number of conditional additions the
    simulator actually performed during training (None when not recorded).
    """

    p_input: float
    p_exc: float
    w_exc_count: int
    w_inh_count: int
    counted_adds: int | None = None
    timesteps: int | None = None
    samples: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.p_input <= 1.0 and 0.0 <= self.p_exc <= 1.0):
            raise ValueError("spike probabilities must lie in [0, 1]")
        if self.w_exc_count < 0 or self.w_inh_count < 0:
            raise ValueError("synapse counts must be >= 0")


def kmeans_energy(k: int, d: int, it: int, N: int) -> EnergyReport:
    """Distance squarings are the only multiplies; adds cover subtraction,
    the per-distance summation and the centroid accumulation."""
    for name, v in (("k", k), ("d", d), ("it", it), ("N", N)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    k, d, it, N = int(k), int(d), int(it), int(N)
    mults = k * d * it * N
    adds = (k * (2 * d - 1) + d) * it * N
    return EnergyReport(adds=adds, mults=mults)


def stdp_adds_per_step(stats: SpikeStats) -> float:
    feedforward = stats.p_input * stats.w_exc_count
    learning = (stats.p_input + stats.p_exc) * stats.w_exc_count
    inhibition = stats.p_exc * stats.w_inh_count
    return feedforward + learning + inhibition


def stdp_energy(stats: SpikeStats, T: int, N: int) -> EnergyReport:
    if T < 0 or N < 0:
        raise ValueError("T and N must be >= 0")
    return EnergyReport(adds=stdp_adds_per_step(stats) * T * N, mults=0)


def solve_p_input(energy_mj: float, p_exc: float, w_exc: int, w_inh: int, T: int, N: int) -> float:
    """Input spike probability that makes ``stdp_energy`` equal ``energy_mj``.

    The add count is linear in p_input, so this is a direct inversion.
    """
    adds_per_step = energy_mj * PJ_PER_MJ / ADD_PJ / (T * N)
    return (adds_per_step - p_exc * w_exc - p_exc * w_inh) / (2 * w_exc)


def measure_spike_stats(spike_stats: SpikeStats) -> SpikeStats:
    """Validate and return the statistics recorded by ``snn.cluster_epoch``.

    ``cluster_epoch`` already reduces its counters to a SpikeStats, so this
    is the hook for callers that want to assert the record is complete.
    """
    if spike_stats.timesteps is None or spike_stats.samples is None:
        raise ValueError("spike statistics were recorded without run dimensions")
    return spike_stats
