"""Experiment drivers: seeded trials, metrics tables, online runs.

A trial is keyed by (scenario, training size, trial index): its channel
state, training set, and test set are derived from the master seed alone
and shared by every method and learner evaluated inside it, so rows from
the same trial are paired. Every random draw flows through a
:class:`numpy.random.SeedSequence` spawn key, which makes any sweep
reproducible bit for bit regardless of row order or method subsets;
``wall_time`` is the one column exempt from that guarantee.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .. import conformal, learners, scenarios
from ..conformal import CPConfig, coverage_and_size
from ..data import Dataset
from ..diffcore import Architecture, conv1d, dense, meanpool, mlp
from ..errors import ConfigError, DataFormatError
from ..online import QuantileNetConfig, RCIConfig, RCIRecords, run_rci

log = logging.getLogger("wavecp.harness")

METHODS = ("naive", "vb", "kcv", "cv")
LEARNERS = ("freq", "bayes")

# Spawn-key scopes for seed derivation; values are arbitrary but frozen.
_STATE, _TRAIN, _TEST, _SPLIT, _FOLDS, _MODEL, _SERIES, _NET = range(1, 9)

_METHOD_ID = {m: i for i, m in enumerate(METHODS)}
_LEARNER_ID = {l: i for i, l in enumerate(LEARNERS)}


def derive_rng(master: int, *key) -> np.random.Generator:
    """Generator for a namespaced draw site under one master seed."""
    spawn_key = tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=spawn_key))


def derive_seed(master: int, *key) -> int:
    spawn_key = tuple(int(k) for k in key)
    ss = np.random.SeedSequence(master, spawn_key=spawn_key)
    return int(ss.generate_state(1, np.uint64)[0])


def dataset_digest(*datasets: Dataset) -> str:
    """Short content hash used to confirm data sharing across method runs."""
    h = hashlib.sha256()
    for d in datasets:
        h.update(np.ascontiguousarray(d.x).tobytes())
        h.update(np.ascontiguousarray(d.y).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentConfig:
    """One offline sweep: scenario, grid, methods, learners, and seeds.

    ``snr`` is linear. ``n_grid`` sizes must be divisible by ``folds`` when
    "kcv" runs and at most ``max_cv_n`` when "cv" runs. ``corpus`` switches
    the modclass scenario from synthesis to resampling a stored corpus.
    """

    scenario: str = "demod"
    methods: tuple = METHODS
    learners: tuple = ("freq",)
    alpha: float = 0.1
    n_grid: tuple = (20, 40, 60)
    n_test: int = 100
    trials: int = 50
    folds: int = 4
    seed: int = 0
    snr: float = 10.0 ** 0.5
    learning_rate: float = 0.2
    iterations: int = 300
    langevin_temperature: float = 800.0
    langevin_ensemble: int = 20
    langevin_burn_in: int = 600
    max_cv_n: int = 200
    cv_alpha_mode: str = "alpha"
    seq_len: int = 64
    modulations: tuple = ("bpsk", "qpsk", "8psk", "16qam")
    corpus: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "learners", tuple(self.learners))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "modulations", tuple(self.modulations))
        if self.scenario not in ("demod", "modclass"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}")
        bad = [l for l in self.learners if l not in LEARNERS]
        if bad or not self.learners:
            raise ConfigError(f"learners must be a non-empty subset of {LEARNERS}")
        CPConfig(alpha=self.alpha, folds=self.folds, cv_alpha_mode=self.cv_alpha_mode)
        if not self.n_grid or min(self.n_grid) < 2:
            raise ConfigError("n_grid needs sizes of at least 2")
        if self.trials < 1 or self.n_test < 1:
            raise ConfigError("trials and n_test must be positive")
        for n in self.n_grid:
            if "kcv" in self.methods and n % self.folds:
                raise ConfigError(
                    f"training size {n} is not divisible by {self.folds} folds"
                )
            if "cv" in self.methods and n > self.max_cv_n:
                raise ConfigError(
                    f"training size {n} exceeds max_cv_n={self.max_cv_n}; "
                    "leave-one-out would train one model per example"
                )
        if not self.snr > 0.0:
            raise ConfigError(f"snr must be a positive linear ratio, got {self.snr}")
        # Surfaces bad learning settings before any trial starts.
        self.train_config("freq", 0)
        if "bayes" in self.learners:
            self.train_config("bayes", 0)

    @property
    def cp(self) -> CPConfig:
        return CPConfig(self.alpha, self.folds, self.cv_alpha_mode)

    def train_config(self, learner: str, seed: int) -> learners.TrainConfig:
        langevin = None
        iterations = self.iterations
        if learner == "bayes":
            langevin = learners.LangevinConfig(
                temperature=self.langevin_temperature,
                ensemble_size=self.langevin_ensemble,
                burn_in=self.langevin_burn_in,
            )
            # The sampler runs burn_in + ensemble_size steps regardless of the
            # gradient-descent iteration budget, which only binds frequentist runs.
            iterations = max(iterations, langevin.burn_in + langevin.ensemble_size)
        return learners.TrainConfig(
            learning_rate=self.learning_rate,
            iterations=iterations,
            seed=seed,
            langevin=langevin,
        )

    def architecture(self) -> Architecture:
        if self.scenario == "demod":
            return mlp(2, (10, 30, 30), scenarios.DEMOD_LABELS, activation="relu")
        n_classes = len(self.modulations)
        return Architecture(
            (
                conv1d(2, 8, 3, activation="selu"),
                conv1d(8, 8, 3, activation="selu"),
                meanpool(),
                dense(8, 16, activation="selu"),
                dense(16, n_classes),
            )
        )


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    method: str
    learner: str
    n_train: int
    trial: int
    empirical_coverage: float
    empirical_inefficiency: float
    wall_time: float


_CSV_COLUMNS = [f.name for f in fields(MetricsRow)]
_METRICS_FORMAT = "wavecp-metrics-v1"
_ONLINE_COLUMNS = [
    "step", "lo", "hi", "y", "err", "theta", "base_lo", "base_hi", "base_err",
]
_ONLINE_FORMAT = "wavecp-online-v1"


def _trial_data(cfg: ExperimentConfig, n: int, trial: int):
    if cfg.scenario == "demod":
        state = scenarios.sample_channel_state(derive_rng(cfg.seed, _STATE, n, trial))
        train = scenarios.gen_demod_dataset(
            state, cfg.snr, n, derive_rng(cfg.seed, _TRAIN, n, trial)
        )
        test = scenarios.gen_demod_dataset(
            state, cfg.snr, cfg.n_test, derive_rng(cfg.seed, _TEST, n, trial)
        )
    elif cfg.corpus is not None:
        corpus, _ = scenarios.load_modclass_corpus(cfg.corpus)
        if len(corpus) < n + cfg.n_test:
            raise ConfigError(
                f"corpus holds {len(corpus)} examples, trial needs {n + cfg.n_test}"
            )
        perm = derive_rng(cfg.seed, _TRAIN, n, trial).permutation(len(corpus))
        train = corpus.subset(perm[:n])
        test = corpus.subset(perm[n : n + cfg.n_test])
    else:
        mc = scenarios.ModClassConfig(
            modulations=cfg.modulations, seq_len=cfg.seq_len, snr=cfg.snr
        )
        train = scenarios.gen_modclass_dataset(
            mc, n, derive_rng(cfg.seed, _TRAIN, n, trial)
        )
        test = scenarios.gen_modclass_dataset(
            mc, cfg.n_test, derive_rng(cfg.seed, _TEST, n, trial)
        )
    log.info(
        "trial data: scenario=%s n=%d trial=%d digest=%s",
        cfg.scenario,
        n,
        trial,
        dataset_digest(train, test),
    )
    return train, test


def _train_one(cfg, arch, data, learner, seed):
    config = cfg.train_config(learner, seed)
    if learner == "bayes":
        return learners.train_langevin(arch, data, config)
    return learners.train_frequentist(arch, data, config)


def _train_folds(cfg, arch, datasets, seeds, learner):
    config = cfg.train_config(learner, 0)
    if learner == "bayes":
        return learners.train_langevin_many(arch, datasets, seeds, config)
    return learners.train_frequentist_many(arch, datasets, seeds, config)


def _method_sets(cfg, arch, train, test, method, learner, n, trial):
    mid = _METHOD_ID[method]
    lid = _LEARNER_ID[learner]
    model_seed = derive_seed(cfg.seed, _MODEL, n, trial, lid, mid, 0)
    if method == "naive":
        predictor = _train_one(cfg, arch, train, learner, model_seed)
        probs = predictor.predict_proba(test.x)
        return [conformal.npb_set(p, cfg.alpha) for p in probs]
    if method == "vb":
        proper, cal = conformal.vb_split(train, derive_rng(cfg.seed, _SPLIT, n, trial))
        predictor = _train_one(cfg, arch, proper, learner, model_seed)
        return conformal.vb_cp_sets(predictor, cal, test.x, cfg.alpha)
    k = cfg.folds if method == "kcv" else len(train)
    folds = conformal.make_folds(len(train), k, derive_rng(cfg.seed, _FOLDS, n, trial, k))
    keep = [np.setdiff1d(np.arange(len(train)), f) for f in folds]
    fold_train = [train.subset(idx) for idx in keep]
    fold_cal = [train.subset(f) for f in folds]
    seeds = [
        derive_seed(cfg.seed, _MODEL, n, trial, lid, mid, i) for i in range(len(folds))
    ]
    fold_predictors = _train_folds(cfg, arch, fold_train, seeds, learner)
    return conformal.kcv_cp_sets(fold_predictors, fold_cal, test.x, cfg.cp.cv_alpha)


def run_offline_trial(cfg: ExperimentConfig, n: int, trial: int) -> list:
    """All (method, learner) rows for one trial; data is shared within it."""
    arch = cfg.architecture()
    train, test = _trial_data(cfg, n, trial)
    rows = []
    for learner in cfg.learners:
        for method in cfg.methods:
            t0 = time.perf_counter()
            sets = _method_sets(cfg, arch, train, test, method, learner, n, trial)
            coverage, inefficiency = coverage_and_size(sets, test.y)
            rows.append(
                MetricsRow(
                    scenario=cfg.scenario,
                    method=method,
                    learner=learner,
                    n_train=n,
                    trial=trial,
                    empirical_coverage=coverage,
                    empirical_inefficiency=inefficiency,
                    wall_time=time.perf_counter() - t0,
                )
            )
    return rows


def sweep_offline(cfg: ExperimentConfig, progress=None) -> list:
    """Every trial of the sweep, in deterministic row order.

    ``progress`` is an optional callable receiving (done, total) after each
    trial; pass e.g. a print wrapper for long sweeps.
    """
    rows = []
    total = len(cfg.n_grid) * cfg.trials
    done = 0
    for n in cfg.n_grid:
        for trial in range(cfg.trials):
            rows.extend(run_offline_trial(cfg, n, trial))
            done += 1
            if progress is not None:
                progress(done, total)
    return rows


def summarize(rows: list) -> dict:
    """Per-method means plus a per (scenario, method, learner, n) breakdown.

    The top-level keys are method names mapping to overall mean coverage and
    inefficiency; the "groups" key carries the detailed grid statistics.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.scenario, r.method, r.learner, r.n_train), []).append(r)
    detail = []
    for (scenario, method, learner, n), rs in sorted(groups.items()):
        cov = np.array([r.empirical_coverage for r in rs])
        ineff = np.array([r.empirical_inefficiency for r in rs])
        detail.append(
            {
                "scenario": scenario,
                "method": method,
                "learner": learner,
                "n_train": n,
                "trials": len(rs),
                "mean_coverage": float(cov.mean()),
                "se_coverage": float(cov.std(ddof=1) / np.sqrt(len(rs)))
                if len(rs) > 1
                else 0.0,
                "mean_inefficiency": float(ineff.mean()),
                "se_inefficiency": float(ineff.std(ddof=1) / np.sqrt(len(rs)))
                if len(rs) > 1
                else 0.0,
            }
        )
    out = {}
    for method in sorted({r.method for r in rows}):
        rs = [r for r in rows if r.method == method]
        out[method] = {
            "mean_coverage": float(np.mean([r.empirical_coverage for r in rs])),
            "mean_inefficiency": float(
                np.mean([r.empirical_inefficiency for r in rs])
            ),
        }
    out["groups"] = detail
    return out


def write_metrics_csv(path, rows: list):
    """Write rows in full float precision; identical rows give identical bytes."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_METRICS_FORMAT} columns={','.join(_CSV_COLUMNS)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.scenario,
                    r.method,
                    r.learner,
                    r.n_train,
                    r.trial,
                    repr(r.empirical_coverage),
                    repr(r.empirical_inefficiency),
                    repr(r.wall_time),
                ]
            )


def read_metrics_csv(path) -> list:
    path = Path(path)
    rows = []
    try:
        with open(path, newline="") as fh:
            marker = fh.readline()
            if not marker.startswith(f"# {_METRICS_FORMAT} "):
                raise DataFormatError(
                    f"{path} lacks the {_METRICS_FORMAT} header comment"
                )
            reader = csv.DictReader(fh)
            if reader.fieldnames != _CSV_COLUMNS:
                raise DataFormatError(
                    f"expected columns {_CSV_COLUMNS} in {path}, got {reader.fieldnames}"
                )
            for raw in reader:
                rows.append(
                    MetricsRow(
                        scenario=raw["scenario"],
                        method=raw["method"],
                        learner=raw["learner"],
                        n_train=int(raw["n_train"]),
                        trial=int(raw["trial"]),
                        empirical_coverage=float(raw["empirical_coverage"]),
                        empirical_inefficiency=float(raw["empirical_inefficiency"]),
                        wall_time=float(raw["wall_time"]),
                    )
                )
    except FileNotFoundError:
        raise
    except (ValueError, KeyError) as exc:
        raise DataFormatError(f"bad metrics row in {path}: {exc}") from exc
    return rows


@dataclass(frozen=True)
class ReliabilityDiagram:
    """Equal-width confidence bins over [1/n_labels, 1] with their accuracy."""

    bin_lower: np.ndarray
    bin_upper: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray
    count: np.ndarray


def reliability_diagram(predictor, data: Dataset, bins: int = 10) -> ReliabilityDiagram:
    """Bin test points by top-label confidence and report per-bin accuracy."""
    if bins < 1:
        raise ConfigError(f"bins must be positive, got {bins}")
    if len(data) == 0:
        raise ConfigError("reliability diagram needs a non-empty test set")
    probs = predictor.predict_proba(data.x)
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == data.y
    lo = 1.0 / probs.shape[1]
    edges = np.linspace(lo, 1.0, bins + 1)
    idx = np.clip(np.digitize(conf, edges[1:-1]), 0, bins - 1)
    mean_conf = np.zeros(bins)
    acc = np.zeros(bins)
    count = np.zeros(bins, dtype=np.int64)
    for b in range(bins):
        mask = idx == b
        count[b] = mask.sum()
        if count[b]:
            mean_conf[b] = conf[mask].mean()
            acc[b] = correct[mask].mean()
    return ReliabilityDiagram(edges[:-1], edges[1:], mean_conf, acc, count)


@dataclass(frozen=True)
class OnlineConfig:
    """One online run: series source plus calibration settings.

    ``source`` is "ar1", "rss", "shifted", or "csv". The uncalibrated
    baseline is the same run with ``gamma = 0``; both share the series and
    the network seed.
    """

    source: str = "ar1"
    steps: int = 20000
    warmup: int = 1000
    alpha: float = 0.1
    gamma: float = 0.03
    eta: float = 0.01
    window: int = 20
    seed: int = 0
    channels: int = 4
    shifted_index: int = 0
    csv_path: Optional[str] = None

    def __post_init__(self):
        if self.source not in ("ar1", "rss", "shifted", "csv"):
            raise ConfigError(f"unknown series source {self.source!r}")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("csv source needs csv_path")
        if self.steps < 2:
            raise ConfigError(f"steps must be at least 2, got {self.steps}")
        if not 0 <= self.warmup < self.steps:
            raise ConfigError(
                f"warmup must lie in [0, steps), got {self.warmup}/{self.steps}"
            )
        if not 0 <= self.shifted_index < 3:
            raise ConfigError("shifted_index must select one of the 3 suite series")

    def series(self) -> Dataset:
        if self.source == "csv":
            records = scenarios.load_rss_csv(self.csv_path)
            if len(records) < 2:
                raise DataFormatError("csv series too short")
            return scenarios.rss_records_to_dataset(records)
        rng = derive_rng(self.seed, _SERIES, self.steps)
        if self.source == "ar1":
            return scenarios.synth_rss(self.steps, rng)
        if self.source == "rss":
            return scenarios.synth_rss_channels(self.steps, self.channels, rng)
        return scenarios.shifted_series_suite(
            derive_seed(self.seed, _SERIES, self.steps), n=self.steps
        )[self.shifted_index]

    def rci_config(self, series: Dataset, gamma=None) -> RCIConfig:
        return RCIConfig(
            alpha=self.alpha,
            gamma=self.gamma if gamma is None else gamma,
            eta=self.eta,
            window=self.window,
            net=QuantileNetConfig(exog_dim=series.n_features),
            seed=derive_seed(self.seed, _NET),
        )


@dataclass
class OnlineResult:
    config: OnlineConfig
    calibrated: RCIRecords
    baseline: RCIRecords

    def summary(self) -> dict:
        skip = self.config.warmup
        cal_w = self.calibrated.mean_width(skip)
        base_w = self.baseline.mean_width(skip)
        return {
            "source": self.config.source,
            "steps": len(self.calibrated),
            "warmup": skip,
            "alpha": self.config.alpha,
            "gamma": self.config.gamma,
            "coverage": self.calibrated.coverage(skip),
            "baseline_coverage": self.baseline.coverage(skip),
            "mean_width": cal_w,
            "baseline_mean_width": base_w,
            "width_ratio": cal_w / base_w if base_w > 0 else float("nan"),
            "width_overhead": (cal_w - base_w) / base_w if base_w > 0 else float("nan"),
        }


def run_online_experiment(cfg: OnlineConfig) -> OnlineResult:
    """Run calibrated and gamma=0 baseline passes over one shared series."""
    series = cfg.series()
    calibrated = run_rci(series, cfg.rci_config(series))
    baseline = run_rci(series, cfg.rci_config(series, gamma=0.0))
    return OnlineResult(cfg, calibrated, baseline)


def write_online_csv(path, result: OnlineResult):
    """Per-step log of both passes: issued edges, misses, calibration state."""
    path = Path(path)
    cal, base = result.calibrated, result.baseline
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_ONLINE_FORMAT} columns={','.join(_ONLINE_COLUMNS)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_ONLINE_COLUMNS)
        for i in range(len(cal)):
            writer.writerow(
                [
                    i + 1,
                    repr(float(cal.lo[i])),
                    repr(float(cal.hi[i])),
                    repr(float(cal.y[i])),
                    int(cal.err[i]),
                    repr(float(cal.theta[i])),
                    repr(float(base.lo[i])),
                    repr(float(base.hi[i])),
                    int(base.err[i]),
                ]
            )
