"""Deep clustering with a spiking STDP network as the clustering stage."""

from .cost import EnergyReport, SpikeStats, kmeans_energy, stdp_energy
from .encoding import ProcessedFeatures, SpikeTrain, encode, preprocess
from .kmeans import KMeansParams, KMeansResult, kmeans_fit
from .metrics import fim_trace, linear_probe, nmi, purity
from .numerics import PcaModel, RngStream, l2_normalize, pca_fit, seeded_rng
from .pipeline import RunConfig, RunLog, generate_pseudo_labels, run_deep_cluster
from .snn import PseudoLabels, SnnConfig, SnnState, cluster_epoch, init_network, simulate_sample, step_timestep

__version__ = "0.1.0"

__all__ = [
    "EnergyReport", "SpikeStats", "kmeans_energy", "stdp_energy",
    "ProcessedFeatures", "SpikeTrain", "encode", "preprocess",
    "KMeansParams", "KMeansResult", "kmeans_fit",
    "fim_trace", "linear_probe", "nmi", "purity",
    "PcaModel", "RngStream", "l2_normalize", "pca_fit", "seeded_rng",
    "RunConfig", "RunLog", "generate_pseudo_labels", "run_deep_cluster",
    "PseudoLabels", "SnnConfig", "SnnState", "cluster_epoch", "init_network", "simulate_sample", "step_timestep",
]
