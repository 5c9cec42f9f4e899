"""Experiment orchestration and the ``wavecp`` command line tool."""

from .experiments import (
    ExperimentConfig,
    MetricsRow,
    OnlineConfig,
    OnlineResult,
    ReliabilityDiagram,
    dataset_digest,
    derive_rng,
    derive_seed,
    read_metrics_csv,
    reliability_diagram,
    run_offline_trial,
    run_online_experiment,
    summarize,
    sweep_offline,
    write_metrics_csv,
    write_online_csv,
)

__all__ = [
    "ExperimentConfig",
    "MetricsRow",
    "OnlineConfig",
    "OnlineResult",
    "ReliabilityDiagram",
    "dataset_digest",
    "derive_rng",
    "derive_seed",
    "read_metrics_csv",
    "reliability_diagram",
    "run_offline_trial",
    "run_online_experiment",
    "summarize",
    "sweep_offline",
    "write_metrics_csv",
    "write_online_csv",
]
