"""Classifier training: full-batch gradient descent and Langevin sampling.

Both trainers consume a :class:`~wavecp.data.Dataset`, minimize mean cross
entropy over softmax outputs, and return a :class:`Predictor`. A frequentist
predictor wraps the single parameter set left after the final step; a
Bayesian predictor keeps an ensemble of post-burn-in Langevin samples and
averages their predictive distributions.

Training treats the dataset as a multiset: examples are put into a canonical
order before the first step, so any permutation of the same examples yields
bit-identical parameters. The ``*_many`` variants train several same-sized
problems in one vectorized pass (parameters stacked along a model axis) and
match their one-at-a-time counterparts exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diffcore
from .data import Dataset
from .errors import ConfigError, DataFormatError
from .diffcore import (
    Architecture,
    CrossEntropyHead,
    NetworkParams,
    forward,
    init_params,
    loss_and_grad,
    n_params,
    prepare_input,
    softmax,
    stack_params,
    unstack_params,
)


@dataclass(frozen=True)
class LangevinConfig:
    """Langevin Monte Carlo settings.

    ``temperature`` scales the injected noise (variance ``2 * lr / T`` per
    coordinate per step; ``inf`` silences it). ``burn_in`` steps are
    discarded, then ``ensemble_size`` consecutive samples are kept.
    """

    temperature: float = 20.0
    ensemble_size: int = 20
    burn_in: int = 100

    def __post_init__(self):
        if not self.temperature > 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.ensemble_size < 1:
            raise ConfigError(
                f"ensemble_size must be at least 1, got {self.ensemble_size}"
            )
        if self.burn_in < 0:
            raise ConfigError(f"burn_in cannot be negative, got {self.burn_in}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    iterations: int = 120
    seed: int = 0
    langevin: Optional[LangevinConfig] = None

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ConfigError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.iterations < 1:
            raise ConfigError(f"iterations must be at least 1, got {self.iterations}")
        if self.langevin is not None:
            needed = self.langevin.burn_in + self.langevin.ensemble_size
            if self.iterations < needed:
                raise ConfigError(
                    f"iterations ({self.iterations}) below burn_in + ensemble_size "
                    f"({needed})"
                )


@dataclass
class Predictor:
    """A trained classifier: one parameter set, or an ensemble of them.

    ``kind`` is "frequentist" (single member) or "bayesian" (uniform mixture
    of members). The predictive distribution is the mean of the members'
    softmax outputs.
    """

    kind: str
    arch: Architecture
    members: list

    def __post_init__(self):
        if self.kind not in ("frequentist", "bayesian"):
            raise ConfigError(f"unknown predictor kind {self.kind!r}")
        if not self.members:
            raise ConfigError("predictor needs at least one member")
        if self.kind == "frequentist" and len(self.members) != 1:
            raise ConfigError("frequentist predictor must have exactly one member")

    @property
    def n_outputs(self):
        return self.arch.layers[-1].out_dim

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Predictive distribution for feature rows ``x`` of shape (n, d) or (d,)."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        net_in = prepare_input(self.arch, x)
        probs = np.zeros((len(x), self.n_outputs))
        for member in self.members:
            probs += softmax(forward(member, net_in))
        probs /= len(self.members)
        return probs[0] if squeeze else probs


def hard_prediction(predictor: Predictor, x: np.ndarray):
    """Most probable label and its probability; ties go to the lowest label."""
    p = predictor.predict_proba(np.asarray(x))
    if p.ndim != 1:
        raise ConfigError("hard_prediction takes a single feature vector")
    label = int(np.argmax(p))
    return label, float(p[label])


def sample_langevin_noise(
    rng: np.random.Generator, size: int, learning_rate: float, temperature: float
) -> np.ndarray:
    """Per-step Langevin perturbation: iid normal, variance ``2*lr/T``."""
    scale = np.sqrt(2.0 * learning_rate / temperature)
    return rng.normal(0.0, scale, size=size)


def _canonical_order(data: Dataset) -> Dataset:
    # Sort rows lexicographically by features then label so that training
    # sees a permutation-independent example order.
    keys = [np.asarray(data.y, dtype=np.float64)]
    keys.extend(data.x[:, j] for j in range(data.x.shape[1] - 1, -1, -1))
    order = np.lexsort(tuple(keys))
    return data.subset(order)


def _check_datasets(arch: Architecture, datasets: list):
    sizes = {len(d) for d in datasets}
    if len(sizes) != 1 or 0 in sizes:
        raise ConfigError("training requires equally sized, non-empty datasets")
    k = arch.layers[-1].out_dim
    for d in datasets:
        if not np.issubdtype(d.y.dtype, np.integer):
            raise ConfigError("classification targets must be integers")
        if d.y.min() < 0 or d.y.max() >= k:
            raise ConfigError(f"labels must lie in [0, {k - 1}]")


def _train_stack(arch, datasets, seeds, config):
    """Shared training loop; returns per-problem lists of parameter snapshots.

    Parameters for all problems are stacked on a model axis and stepped
    together. Per-problem generators are consumed in the same order as a
    solo run (initialization first, then one noise draw per step), so the
    stacked run reproduces solo runs exactly.
    """
    datasets = [_canonical_order(d) for d in datasets]
    m = len(datasets)
    rngs = [np.random.default_rng(s) for s in seeds]
    stacked = stack_params([init_params(arch, rng) for rng in rngs])
    xs = prepare_input(arch, np.stack([d.x for d in datasets]))
    ys = np.stack([d.y.astype(np.int64) for d in datasets])
    head = CrossEntropyHead()
    lconf = config.langevin
    steps = config.iterations if lconf is None else lconf.burn_in + lconf.ensemble_size
    size = n_params(stacked)
    n = xs.shape[1]
    snapshots = [[] for _ in range(m)]
    for step in range(1, steps + 1):
        _, grads = loss_and_grad(stacked, xs, ys, head)
        arrays = stacked.arrays()
        garrays = grads.arrays()
        for a, g in zip(arrays, garrays):
            if lconf is None:
                a -= config.learning_rate * g
            else:
                # The Gaussian prior contributes params / n to the gradient
                # of the per-example objective.
                a -= config.learning_rate * (g + a / n)
        if lconf is not None:
            for k in range(m):
                noise = sample_langevin_noise(
                    rngs[k], size, config.learning_rate, lconf.temperature
                )
                diffcore.add_flat(stacked, k, noise)
            if step > lconf.burn_in:
                for k, p in enumerate(unstack_params(stacked)):
                    snapshots[k].append(p)
    if lconf is None:
        return [[p] for p in unstack_params(stacked)]
    return snapshots


def train_frequentist(arch: Architecture, data: Dataset, config: TrainConfig) -> Predictor:
    """Full-batch gradient descent on mean cross entropy."""
    return train_frequentist_many(arch, [data], [config.seed], config)[0]


def train_frequentist_many(arch, datasets, seeds, config) -> list:
    """Train one frequentist predictor per dataset in a single stacked pass."""
    if len(datasets) != len(seeds):
        raise ConfigError("need one seed per dataset")
    if config.langevin is not None:
        raise ConfigError("frequentist training takes no Langevin settings")
    _check_datasets(arch, datasets)
    results = _train_stack(arch, datasets, seeds, config)
    return [Predictor("frequentist", arch, members) for members in results]


def train_langevin(arch: Architecture, data: Dataset, config: TrainConfig) -> Predictor:
    """Langevin Monte Carlo: noisy gradient steps on the regularized loss.

    The objective adds a standard normal log-prior scaled by 1/n to the mean
    cross entropy. Noise is injected from the first step; samples taken
    after ``burn_in`` form the returned ensemble.
    """
    return train_langevin_many(arch, [data], [config.seed], config)[0]


def train_langevin_many(arch, datasets, seeds, config) -> list:
    """Train one Bayesian predictor per dataset in a single stacked pass."""
    if len(datasets) != len(seeds):
        raise ConfigError("need one seed per dataset")
    if config.langevin is None:
        raise ConfigError("train_langevin requires langevin settings")
    _check_datasets(arch, datasets)
    results = _train_stack(arch, datasets, seeds, config)
    return [Predictor("bayesian", arch, members) for members in results]


_KIND_TAG = {"frequentist": b"F", "bayesian": b"B"}


def predictor_to_bytes(predictor: Predictor) -> bytes:
    """Serialize a predictor: kind tag, member count, then each member."""
    chunks = [_KIND_TAG[predictor.kind], len(predictor.members).to_bytes(4, "little")]
    for member in predictor.members:
        blob = diffcore.params_to_bytes(member)
        chunks.append(len(blob).to_bytes(8, "little"))
        chunks.append(blob)
    return b"".join(chunks)


def predictor_from_bytes(data: bytes) -> Predictor:
    if len(data) < 5:
        raise DataFormatError("truncated predictor blob")
    kinds = {v: k for k, v in _KIND_TAG.items()}
    tag = data[:1]
    if tag not in kinds:
        raise DataFormatError(f"unknown predictor tag {tag!r}")
    count = int.from_bytes(data[1:5], "little")
    members = []
    pos = 5
    for _ in range(count):
        if pos + 8 > len(data):
            raise DataFormatError("truncated predictor blob")
        size = int.from_bytes(data[pos : pos + 8], "little")
        pos += 8
        if pos + size > len(data):
            raise DataFormatError("truncated predictor blob")
        members.append(diffcore.params_from_bytes(data[pos : pos + size]))
        pos += size
    if pos != len(data):
        raise DataFormatError("trailing bytes after predictor blob")
    if not members:
        raise DataFormatError("predictor blob holds no members")
    return Predictor(kinds[tag], members[0].arch, members)
