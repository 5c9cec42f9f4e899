"""Online interval prediction on a scalar stream with long-run calibration.

Two pinball-trained quantile networks (levels alpha/2 and 1 - alpha/2) read
a sliding window of recent (features, value) pairs and propose an interval
for the next value. A scalar calibration state ``theta`` stretches or
shrinks that interval: each miss pushes ``theta`` up by ``gamma * (1 -
alpha)``, each hit pulls it down by ``gamma * alpha``, so the long-run miss
rate is driven toward ``alpha`` on any sequence, without distributional
assumptions. ``gamma = 0`` disables the correction and leaves the raw
quantile intervals, which is the natural uncalibrated baseline.

Each quantile network maps the window through a small shared per-slot MLP to
one scalar per slot, runs the scalar sequence through stacked LSTM layers
(state reset every time index), and reads the interval edge off a final MLP
over the current features and the last hidden states. All updates are
single-sample SGD steps on the pinball loss, backpropagated through the
unrolled window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conformal import PredictionInterval
from .data import Dataset
from .diffcore import (
    Architecture,
    NetworkParams,
    backward,
    dense,
    forward_cached,
    init_params,
    lstm,
    lstm_cell_backward,
    lstm_cell_cached,
    mlp,
)
from .diffcore.params import LstmBlock
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class QuantileNetConfig:
    """Shapes of the windowed quantile network.

    ``exog_dim`` may be zero for a plain scalar series. ``lstm_layers``
    stacked recurrences feed the readout with the concatenation of all their
    final hidden states.
    """

    exog_dim: int = 0
    pre_hidden: tuple = (16, 32)
    lstm_hidden: int = 32
    lstm_layers: int = 2
    post_hidden: tuple = (32,)

    def __post_init__(self):
        if self.exog_dim < 0:
            raise ConfigError(f"exog_dim cannot be negative, got {self.exog_dim}")
        if self.lstm_hidden < 1 or self.lstm_layers < 1:
            raise ConfigError("need at least one lstm layer with positive width")

    @property
    def pair_dim(self) -> int:
        return self.exog_dim + 1


@dataclass(frozen=True)
class RCIConfig:
    """Rolling conformal inference settings.

    ``alpha`` is the target miss rate, ``gamma`` the calibration step size,
    ``eta`` the model learning rate, and ``window`` the number of past pairs
    each prediction conditions on.
    """

    alpha: float = 0.1
    gamma: float = 0.03
    eta: float = 0.01
    window: int = 20
    net: QuantileNetConfig = field(default_factory=QuantileNetConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma cannot be negative, got {self.gamma}")
        if not self.eta > 0.0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.window < 1:
            raise ConfigError(f"window must be at least 1, got {self.window}")


def quantile_net_architecture(net: QuantileNetConfig) -> Architecture:
    """Layer stack of one quantile network, in wiring order.

    Dense layers before the first lstm form the per-slot MLP; the trailing
    dense layers form the readout over (features, final hidden states).
    """
    pre = mlp(net.pair_dim, net.pre_hidden, 1).layers
    cells = tuple(
        lstm(1 if i == 0 else net.lstm_hidden, net.lstm_hidden)
        for i in range(net.lstm_layers)
    )
    post_in = net.exog_dim + net.lstm_layers * net.lstm_hidden
    post = mlp(post_in, net.post_hidden, 1).layers
    return Architecture(pre + cells + post)


def _split_blocks(params: NetworkParams):
    """Views of the per-slot MLP, lstm blocks, and readout (no copies)."""
    kinds = [s.kind for s in params.arch]
    first = kinds.index("lstm")
    last = len(kinds) - 1 - kinds[::-1].index("lstm")
    pre = NetworkParams(
        Architecture(params.arch.layers[:first]), params.blocks[:first]
    )
    cells = params.blocks[first : last + 1]
    post = NetworkParams(
        Architecture(params.arch.layers[last + 1 :]), params.blocks[last + 1 :]
    )
    return pre, cells, post


def stretching(theta: float) -> float:
    """Monotone odd map from calibration state to interval padding."""
    return float(np.sign(theta) * np.expm1(abs(theta)))


def quantile_net_forward(
    params: NetworkParams, window: np.ndarray, x: np.ndarray
) -> float:
    """Edge estimate for the next value given the window and current features."""
    y, _ = _forward_cached(params, window, x)
    return y


def _forward_cached(params: NetworkParams, window: np.ndarray, x: np.ndarray):
    window = np.asarray(window, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    pre, cells, post = _split_blocks(params)
    if window.ndim != 2 or window.shape[1] != pre.arch.layers[0].in_dim:
        raise ShapeError(
            f"expected window of shape (k, {pre.arch.layers[0].in_dim}), "
            f"got {window.shape}"
        )
    slot_out, pre_caches = forward_cached(pre, window)
    slots = slot_out[:, 0]
    hs = [np.zeros(b.hidden) for b in cells]
    cs = [np.zeros(b.hidden) for b in cells]
    cell_caches = []
    for j in range(len(slots)):
        step = []
        inp = slots[j : j + 1]
        for layer, block in enumerate(cells):
            hs[layer], cs[layer], cache = lstm_cell_cached(
                block, inp, hs[layer], cs[layer]
            )
            step.append(cache)
            inp = hs[layer]
        cell_caches.append(step)
    post_in = np.concatenate([x, *hs])[None, :]
    out, post_caches = forward_cached(post, post_in)
    cache = (window, x, pre_caches, cell_caches, post_caches, slot_out)
    return float(out[0, 0]), cache


def _backward(params: NetworkParams, cache, d_out: float) -> NetworkParams:
    """Gradient of ``d_out * output`` w.r.t. every parameter block."""
    window, x, pre_caches, cell_caches, post_caches, slot_out = cache
    pre, cells, post = _split_blocks(params)
    post_grads, d_post_in = backward(post, post_caches, np.array([[d_out]]))
    d_flat = d_post_in[0]
    hid = cells[0].hidden
    n_layers = len(cells)
    dh = [
        d_flat[x.size + layer * hid : x.size + (layer + 1) * hid].copy()
        for layer in range(n_layers)
    ]
    dc = [np.zeros(hid) for _ in range(n_layers)]
    cell_grads = [
        LstmBlock(np.zeros_like(b.wx), np.zeros_like(b.wh), np.zeros_like(b.b))
        for b in cells
    ]
    d_slots = np.zeros(len(cell_caches))
    for j in range(len(cell_caches) - 1, -1, -1):
        d_input = None
        for layer in range(n_layers - 1, -1, -1):
            d_h_total = dh[layer] if d_input is None else dh[layer] + d_input
            d_input, dh[layer], dc[layer], g = lstm_cell_backward(
                cells[layer], cell_caches[j][layer], d_h_total, dc[layer]
            )
            cell_grads[layer].wx += g.wx
            cell_grads[layer].wh += g.wh
            cell_grads[layer].b += g.b
        d_slots[j] = d_input[0]
    pre_grads, _ = backward(pre, pre_caches, d_slots[:, None])
    blocks = list(pre_grads.blocks) + cell_grads + list(post_grads.blocks)
    return NetworkParams(params.arch, blocks)


def _sgd_step(params: NetworkParams, grads: NetworkParams, eta: float):
    for a, g in zip(params.arrays(), grads.arrays()):
        a -= eta * g


def _pinball_d_out(q: float, y: float, y_hat: float) -> float:
    # Sub-gradient at the kink comes from the underestimation side.
    return -q if y >= y_hat else 1.0 - q


@dataclass
class RCIState:
    """Mutable state of one rolling conformal inference run."""

    config: RCIConfig
    params_lo: NetworkParams
    params_hi: NetworkParams
    theta: float = 0.0
    history: list = field(default_factory=list)

    def window_matrix(self) -> np.ndarray:
        k = self.config.window
        pair_dim = self.config.net.pair_dim
        rows = self.history[-k:]
        out = np.zeros((k, pair_dim))
        if rows:
            out[k - len(rows) :] = rows
        return out


def init_rci_state(config: RCIConfig) -> RCIState:
    """Fresh state: zero calibration, empty history, seeded edge networks."""
    arch = quantile_net_architecture(config.net)
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    return RCIState(
        config=config,
        params_lo=init_params(arch, np.random.default_rng(seeds[0])),
        params_hi=init_params(arch, np.random.default_rng(seeds[1])),
    )


def rci_predict(state: RCIState, x: np.ndarray) -> PredictionInterval:
    """Interval for the next value given current features ``x``."""
    x = np.asarray(x, dtype=np.float64)
    window = state.window_matrix()
    lo = quantile_net_forward(state.params_lo, window, x)
    hi = quantile_net_forward(state.params_hi, window, x)
    pad = stretching(state.theta)
    return PredictionInterval(lo - pad, hi + pad)


def rci_update(state: RCIState, x: np.ndarray, y: float) -> PredictionInterval:
    """One full step: predict, score the miss, recalibrate, adapt, append.

    Returns the interval that was issued for ``y`` (before any updates).
    """
    interval, _ = _step(state, np.asarray(x, dtype=np.float64), float(y))
    return interval


def _step(state: RCIState, x: np.ndarray, y: float):
    cfg = state.config
    window = state.window_matrix()
    lo, cache_lo = _forward_cached(state.params_lo, window, x)
    hi, cache_hi = _forward_cached(state.params_hi, window, x)
    pad = stretching(state.theta)
    interval = PredictionInterval(lo - pad, hi + pad)
    err = 0.0 if y in interval else 1.0
    theta_used = state.theta
    state.theta += cfg.gamma * (err - cfg.alpha)
    q_lo = cfg.alpha / 2.0
    q_hi = 1.0 - cfg.alpha / 2.0
    _sgd_step(
        state.params_lo,
        _backward(state.params_lo, cache_lo, _pinball_d_out(q_lo, y, lo)),
        cfg.eta,
    )
    _sgd_step(
        state.params_hi,
        _backward(state.params_hi, cache_hi, _pinball_d_out(q_hi, y, hi)),
        cfg.eta,
    )
    state.history.append(np.concatenate([x, [y]]))
    return interval, (err, theta_used)


@dataclass
class RCIRecords:
    """Per-step log of one run: issued edges, misses, calibration state."""

    lo: np.ndarray
    hi: np.ndarray
    y: np.ndarray
    err: np.ndarray
    theta: np.ndarray

    def __len__(self):
        return len(self.y)

    @property
    def width(self) -> np.ndarray:
        return np.maximum(self.hi - self.lo, 0.0)

    def coverage(self, skip: int = 0) -> float:
        """Fraction of covered steps after discarding the first ``skip``."""
        if skip >= len(self.y):
            raise ConfigError(f"skip {skip} leaves no steps out of {len(self.y)}")
        return float(1.0 - self.err[skip:].mean())

    def mean_width(self, skip: int = 0) -> float:
        if skip >= len(self.y):
            raise ConfigError(f"skip {skip} leaves no steps out of {len(self.y)}")
        return float(self.width[skip:].mean())


def run_rci(series: Dataset, config: RCIConfig) -> RCIRecords:
    """Stream a series through rolling conformal inference from scratch.

    ``series.x`` holds per-step features (shape (n, exog_dim)) and
    ``series.y`` the scalar targets. Identical series and config give an
    identical record stream.
    """
    if series.n_features != config.net.exog_dim:
        raise ConfigError(
            f"series has {series.n_features} feature columns, "
            f"config expects {config.net.exog_dim}"
        )
    state = init_rci_state(config)
    n = len(series)
    lo = np.zeros(n)
    hi = np.zeros(n)
    err = np.zeros(n)
    theta = np.zeros(n)
    ys = np.asarray(series.y, dtype=np.float64)
    for i in range(n):
        interval, (miss, theta_used) = _step(state, series.x[i], float(ys[i]))
        lo[i] = interval.lo
        hi[i] = interval.hi
        err[i] = miss
        theta[i] = theta_used
    return RCIRecords(lo=lo, hi=hi, y=ys.copy(), err=err, theta=theta)
