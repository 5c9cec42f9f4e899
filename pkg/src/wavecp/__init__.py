"""Calibrated set and interval prediction for radio signal tasks.

The package provides three layers:

- ``diffcore``: a small float64 network substrate (dense, conv1d, lstm)
  with hand-derived gradients and deterministic initialization.
- ``learners`` / ``conformal`` / ``online``: classifier training, set
  predictors with finite-sample coverage targets, and a rolling online
  calibrator for scalar streams.
- ``scenarios`` / ``harness``: synthetic radio data (demodulation,
  modulation classification, signal-strength series), experiment drivers,
  and the ``wavecp`` command line tool.
"""

from . import conformal, data, diffcore, errors, harness, learners, online, scenarios
from .conformal import (
    CPConfig,
    PredictionInterval,
    PredictionSet,
    coverage_and_size,
    empirical_quantile_from_top,
    kcv_cp_predict,
    kcv_cp_sets,
    make_folds,
    nc_score_logloss,
    npb_set,
    nqb_interval,
    vb_cp_predict,
    vb_cp_sets,
    vb_split,
)
from .data import Dataset, Example
from .errors import (
    ConfigError,
    DataFormatError,
    NumericsError,
    ShapeError,
    WavecpError,
)
from .learners import (
    LangevinConfig,
    Predictor,
    TrainConfig,
    hard_prediction,
    train_frequentist,
    train_langevin,
)
from .online import (
    QuantileNetConfig,
    RCIConfig,
    RCIRecords,
    RCIState,
    init_rci_state,
    rci_predict,
    rci_update,
    run_rci,
    stretching,
)

__version__ = "0.1.0"

__all__ = [
    "CPConfig",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "Example",
    "LangevinConfig",
    "NumericsError",
    "PredictionInterval",
    "PredictionSet",
    "Predictor",
    "QuantileNetConfig",
    "RCIConfig",
    "RCIRecords",
    "RCIState",
    "ShapeError",
    "TrainConfig",
    "WavecpError",
    "conformal",
    "coverage_and_size",
    "data",
    "diffcore",
    "empirical_quantile_from_top",
    "errors",
    "hard_prediction",
    "harness",
    "init_rci_state",
    "kcv_cp_predict",
    "kcv_cp_sets",
    "learners",
    "make_folds",
    "nc_score_logloss",
    "npb_set",
    "nqb_interval",
    "online",
    "rci_predict",
    "rci_update",
    "run_rci",
    "scenarios",
    "stretching",
    "train_frequentist",
    "train_langevin",
    "vb_cp_predict",
    "vb_cp_sets",
    "vb_split",
    "__version__",
]
