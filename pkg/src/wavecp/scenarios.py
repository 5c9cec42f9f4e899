"""Synthetic radio scenarios: demodulation, modulation classification, RSS.

Everything here is data generation. The demodulation scenario draws 8-APSK
symbols through a channel with IQ imbalance, a random phase, and complex
Gaussian noise; one channel state is drawn per trial and shared by its
training and test sets. The modulation classification scenario emits raw
(I, Q) sample sequences labeled by constellation. The RSS scenario provides
autoregressive and regime-switching signal-strength series for online
prediction, plus a CSV loader for recorded traces.

SNR arguments are linear power ratios; decibel conversion belongs to the
caller. All draws go through an explicit generator and happen in a
documented order, so a fixed seed pins every dataset bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataFormatError

DEMOD_LABELS = 8


def apsk8_constellation() -> np.ndarray:
    """8-APSK points, unit mean power: labels 0-3 on the inner ring.

    The inner ring sits at phases pi/4 + k*pi/2, the outer ring at twice the
    radius and phases k*pi/2, both ordered by increasing k.
    """
    r1 = 1.0 / np.sqrt(2.5)
    inner = r1 * np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    outer = 2 * r1 * np.exp(1j * (np.pi / 2 * np.arange(4)))
    return np.concatenate([inner, outer])


def sample_beta_5_2(rng: np.random.Generator) -> float:
    """Beta(5, 2) variate as the fifth smallest of six uniform draws."""
    return float(np.sort(rng.uniform(size=6))[4])


@dataclass(frozen=True)
class ChannelState:
    """Per-trial channel condition: amplitude/phase imbalance and rotation."""

    epsilon: float
    delta: float
    psi: float


def sample_channel_state(rng: np.random.Generator) -> ChannelState:
    """Draw a channel state: epsilon, then delta, then the phase.

    Amplitude imbalance is 0.15 * Beta(5, 2), phase imbalance 15 degrees
    * Beta(5, 2) (in radians), and the rotation uniform on [0, 2*pi).
    """
    epsilon = 0.15 * sample_beta_5_2(rng)
    delta = np.deg2rad(15.0) * sample_beta_5_2(rng)
    psi = float(rng.uniform(0.0, 2.0 * np.pi))
    return ChannelState(epsilon, delta, psi)


def iq_imbalance(points: np.ndarray, epsilon: float, delta: float) -> np.ndarray:
    """Amplitude/phase IQ imbalance applied to complex baseband points."""
    points = np.asarray(points, dtype=np.complex128)
    i, q = points.real, points.imag
    cos_d, sin_d = np.cos(delta), np.sin(delta)
    i_bar = (1.0 + epsilon) * (cos_d * i - sin_d * q)
    q_bar = (1.0 - epsilon) * (-sin_d * i + cos_d * q)
    return i_bar + 1j * q_bar


def channel_output(
    labels: np.ndarray, state: ChannelState, snr: float, rng: np.random.Generator
) -> np.ndarray:
    """Received samples for transmitted labels under ``state``.

    The constellation point passes through the IQ imbalance, rotates by the
    channel phase, and picks up complex Gaussian noise of power 1/snr (real
    parts drawn before imaginary parts).
    """
    if not snr > 0.0:
        raise ConfigError(f"snr must be a positive linear ratio, got {snr}")
    labels = np.asarray(labels, dtype=np.int64)
    clean = iq_imbalance(apsk8_constellation()[labels], state.epsilon, state.delta)
    sigma = np.sqrt(0.5 / snr)
    noise = rng.normal(0.0, sigma, labels.size) + 1j * rng.normal(
        0.0, sigma, labels.size
    )
    return np.exp(1j * state.psi) * clean + noise


def _complex_to_features(samples: np.ndarray) -> np.ndarray:
    return np.stack([samples.real, samples.imag], axis=-1).reshape(len(samples), -1)


def gen_demod_dataset(
    state: ChannelState, snr: float, n: int, rng: np.random.Generator
) -> Dataset:
    """Labeled (I, Q) features for ``n`` symbols: labels drawn, then noise."""
    if n < 1:
        raise ConfigError(f"need at least one example, got {n}")
    labels = rng.integers(0, DEMOD_LABELS, size=n)
    received = channel_output(labels, state, snr, rng)
    return Dataset(_complex_to_features(received), labels.astype(np.int64))


MODULATIONS = {
    "bpsk": np.array([1.0 + 0.0j, -1.0 + 0.0j]),
    "qpsk": np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4))),
    "8psk": np.exp(1j * (np.pi / 4 * np.arange(8))),
    "16qam": (
        np.array([a + 1j * b for a in (-3, -1, 1, 3) for b in (-3, -1, 1, 3)])
        / np.sqrt(10.0)
    ),
}


@dataclass(frozen=True)
class ModClassConfig:
    """Modulation classification scenario settings.

    Each example is ``seq_len`` random symbols from one constellation,
    rotated by a per-example uniform phase and observed in complex Gaussian
    noise at linear ``snr``. Class labels follow ``modulations`` order.
    """

    modulations: tuple = ("bpsk", "qpsk", "8psk", "16qam")
    seq_len: int = 64
    snr: float = 10.0 ** 0.5

    def __post_init__(self):
        for name in self.modulations:
            if name not in MODULATIONS:
                raise ConfigError(f"unknown modulation {name!r}")
        if len(set(self.modulations)) != len(self.modulations):
            raise ConfigError("duplicate modulation names")
        if len(self.modulations) < 2:
            raise ConfigError("need at least two modulation classes")
        if self.seq_len < 1:
            raise ConfigError(f"seq_len must be positive, got {self.seq_len}")
        if not self.snr > 0.0:
            raise ConfigError(f"snr must be a positive linear ratio, got {self.snr}")

    @property
    def n_classes(self):
        return len(self.modulations)

    @property
    def n_features(self):
        return 2 * self.seq_len


def gen_modclass_dataset(
    config: ModClassConfig, n: int, rng: np.random.Generator
) -> Dataset:
    """``n`` labeled sample sequences, features interleaved as I0,Q0,I1,Q1,...

    Per example the draws are: symbol indices, then the phase, then noise
    (real parts before imaginary parts). Class labels are drawn up front.
    """
    if n < 1:
        raise ConfigError(f"need at least one example, got {n}")
    labels = rng.integers(0, config.n_classes, size=n)
    sigma = np.sqrt(0.5 / config.snr)
    x = np.zeros((n, config.n_features))
    for i in range(n):
        constellation = MODULATIONS[config.modulations[labels[i]]]
        symbols = constellation[rng.integers(0, len(constellation), size=config.seq_len)]
        psi = rng.uniform(0.0, 2.0 * np.pi)
        noise = rng.normal(0.0, sigma, config.seq_len) + 1j * rng.normal(
            0.0, sigma, config.seq_len
        )
        samples = np.exp(1j * psi) * symbols + noise
        x[i] = np.stack([samples.real, samples.imag], axis=-1).ravel()
    return Dataset(x, labels.astype(np.int64))


_CORPUS_FORMAT = "wavecp-modclass-corpus-v1"


def save_modclass_corpus(path, dataset: Dataset, config: ModClassConfig):
    """Write features as little-endian float32 with a JSON sidecar.

    ``path`` names the binary file; the sidecar lives at ``path + ".json"``
    and records shapes, class names, and the label sequence.
    """
    path = Path(path)
    if dataset.n_features != config.n_features:
        raise ConfigError(
            f"dataset has {dataset.n_features} features, config expects "
            f"{config.n_features}"
        )
    path.write_bytes(dataset.x.astype("<f4").tobytes())
    sidecar = {
        "format": _CORPUS_FORMAT,
        "n": len(dataset),
        "seq_len": config.seq_len,
        "channels": 2,
        "snr": config.snr,
        "modulations": list(config.modulations),
        "labels": [int(v) for v in dataset.y],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))


def load_modclass_corpus(path):
    """Read a corpus written by :func:`save_modclass_corpus`.

    Returns ``(dataset, config)``. Features come back as float64 (converted
    from the stored float32). Malformed sidecars, size mismatches, and
    out-of-range labels raise :class:`DataFormatError`.
    """
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not path.exists() or not sidecar_path.exists():
        raise DataFormatError(f"missing corpus file or sidecar for {path}")
    try:
        meta = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad corpus sidecar: {exc}") from exc
    if meta.get("format") != _CORPUS_FORMAT:
        raise DataFormatError(f"unsupported corpus format {meta.get('format')!r}")
    try:
        config = ModClassConfig(
            modulations=tuple(meta["modulations"]),
            seq_len=int(meta["seq_len"]),
            snr=float(meta["snr"]),
        )
        n = int(meta["n"])
        labels = np.asarray(meta["labels"], dtype=np.int64)
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise DataFormatError(f"bad corpus sidecar: {exc}") from exc
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != n * config.n_features:
        raise DataFormatError(
            f"expected {n * config.n_features} float32 values, got {raw.size}"
        )
    if labels.shape != (n,) or (n and (labels.min() < 0 or labels.max() >= config.n_classes)):
        raise DataFormatError("corpus labels missing or out of range")
    x = raw.astype(np.float64).reshape(n, config.n_features)
    return Dataset(x, labels), config


def one_hot(ids: np.ndarray, width: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= width):
        raise DataFormatError(f"ids must lie in [0, {width - 1}]")
    out = np.zeros((ids.size, width))
    out[np.arange(ids.size), ids] = 1.0
    return out


@dataclass(frozen=True)
class RSSRecord:
    """One row of a signal-strength trace; ``channel_id`` may be absent."""

    index: int
    channel_id: Optional[int]
    rss: float


def load_rss_csv(path) -> list:
    """Read a signal-strength trace: columns ``index,channel_id,rss``.

    The ``channel_id`` column is optional. Indices must be strictly
    increasing; malformed rows raise :class:`DataFormatError` naming the
    offending line.
    """
    path = Path(path)
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None:
            header = [f.strip() for f in header]
        if header == ["index", "channel_id", "rss"]:
            has_channel = True
        elif header == ["index", "rss"]:
            has_channel = False
        else:
            raise DataFormatError(
                f"expected header index,channel_id,rss (channel_id optional) "
                f"in {path}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path} line {lineno}: wrong field count")
            try:
                index = int(row[0])
                channel_id = int(row[1]) if has_channel and row[1].strip() else None
                rss = float(row[-1])
            except ValueError as exc:
                raise DataFormatError(f"{path} line {lineno}: {exc}") from exc
            if records and index <= records[-1].index:
                raise DataFormatError(
                    f"{path} line {lineno}: index {index} not increasing"
                )
            records.append(RSSRecord(index, channel_id, rss))
    if not records:
        raise DataFormatError(f"no data rows in {path}")
    return records


def rss_records_to_dataset(records: list) -> Dataset:
    """Series view of RSS records: one-hot channel features, rss targets.

    Records without channel ids produce a zero-width feature matrix; mixing
    present and absent ids in one trace is rejected.
    """
    if not records:
        raise DataFormatError("no RSS records")
    values = np.array([r.rss for r in records], dtype=np.float64)
    flags = {r.channel_id is None for r in records}
    if flags == {True}:
        return Dataset(np.zeros((len(records), 0)), values)
    if len(flags) != 1:
        raise DataFormatError("channel_id present on some rows but not others")
    ids = np.array([r.channel_id for r in records], dtype=np.int64)
    if ids.min() < 0:
        raise DataFormatError("negative channel id")
    return Dataset(one_hot(ids, int(ids.max()) + 1), values)


def synth_rss(
    n: int,
    rng: np.random.Generator,
    mu: float = 0.0,
    rho: float = 0.9,
    sigma: float = 1.0,
) -> Dataset:
    """Stationary AR(1) signal-strength series with no side features.

    ``y[t] = mu + rho * (y[t-1] - mu) + sigma * e[t]`` with standard normal
    innovations; ``y[0]`` starts from the stationary distribution.
    """
    if n < 1:
        raise ConfigError(f"need at least one step, got {n}")
    if not -1.0 < rho < 1.0:
        raise ConfigError(f"rho must lie in (-1, 1), got {rho}")
    e = rng.normal(size=n)
    y = np.zeros(n)
    y[0] = mu + sigma / np.sqrt(1.0 - rho**2) * e[0]
    for t in range(1, n):
        y[t] = mu + rho * (y[t - 1] - mu) + sigma * e[t]
    return Dataset(np.zeros((n, 0)), y)


def synth_rss_channels(
    n: int,
    n_channels: int,
    rng: np.random.Generator,
    rho: float = 0.9,
    sigma: float = 1.0,
    channel_spread: float = 6.0,
) -> Dataset:
    """Multi-channel signal-strength sim: shared AR(1) plus channel offsets.

    Each step observes one uniformly chosen channel; its id arrives one-hot
    in the features. Offsets are evenly spaced over ``channel_spread``.
    """
    if n_channels < 1:
        raise ConfigError(f"need at least one channel, got {n_channels}")
    base = synth_rss(n, rng, mu=0.0, rho=rho, sigma=sigma)
    ids = rng.integers(0, n_channels, size=n)
    if n_channels == 1:
        offsets = np.zeros(1)
    else:
        offsets = np.linspace(-channel_spread / 2.0, channel_spread / 2.0, n_channels)
    return Dataset(one_hot(ids, n_channels), base.y + offsets[ids])


def synth_shifted(
    n: int,
    rng: np.random.Generator,
    jump: float = 8.0,
    period: int = 500,
    burst_scale: float = 6.0,
    burst_every: int = 5,
    burst_len: int = 100,
    tail_df: Optional[float] = None,
) -> Dataset:
    """Regime-switching series that stresses a fixed-width predictor.

    An AR(1) core whose mean alternates by ``+-jump`` every ``period``
    steps; every ``burst_every``-th regime also multiplies the innovation
    scale by ``burst_scale`` for its first ``burst_len`` steps. Innovations
    are unit normal unless ``tail_df`` selects a Student-t with that many
    degrees of freedom, whose outliers keep an online quantile tracker
    permanently behind the scale regime.
    """
    if n < 1:
        raise ConfigError(f"need at least one step, got {n}")
    if period < 2 or burst_len < 1 or burst_every < 1:
        raise ConfigError("period, burst_len, and burst_every must be positive")
    if tail_df is not None and tail_df <= 0.0:
        raise ConfigError(f"tail_df must be positive, got {tail_df}")
    rho = 0.8
    e = rng.standard_t(tail_df, size=n) if tail_df else rng.normal(size=n)
    y = np.zeros(n)
    level = 0.0
    prev = 0.0
    for t in range(n):
        regime = t // period
        if t % period == 0 and t > 0:
            level += jump if regime % 2 else -jump
        scale = 1.0
        if regime % burst_every == burst_every - 1 and t % period < burst_len:
            scale = burst_scale
        prev = rho * prev + scale * e[t]
        y[t] = level + prev
    return Dataset(np.zeros((n, 0)), y)


def shifted_series_suite(seed: int, n: int = 20000) -> list:
    """Three distribution-shifted test series with distinct stress patterns.

    The first member alternates heavy-tailed calm and turbulent variance
    regimes, the second walks its mean level up and down, and the third
    mixes moderate level jumps with short Gaussian bursts.
    """
    root = np.random.SeedSequence(seed)
    kids = root.spawn(3)
    return [
        synth_shifted(
            n, np.random.default_rng(kids[0]), jump=0.0, period=500,
            burst_scale=50.0, burst_every=2, burst_len=500, tail_df=1.2,
        ),
        synth_shifted(n, np.random.default_rng(kids[1]), jump=8.0, period=500),
        synth_shifted(
            n, np.random.default_rng(kids[2]), jump=12.0, period=800,
            burst_scale=4.0, burst_every=3, burst_len=150,
        ),
    ]
