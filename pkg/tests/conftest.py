"""Shared builders for the test suite.

The gradient cases here are reused by both the unit tests and the
acceptance gate: each builder draws a small random network plus a batch,
redrawing until every kinked activation (relu, selu) sits at least
``_MARGIN`` away from its corner and every pinball residual is similarly
bounded, so central finite differences with step 1e-5 stay on one branch.
"""

import numpy as np
import pytest

from wavecp.diffcore import (
    Architecture,
    CrossEntropyHead,
    PinballHead,
    conv1d,
    dense,
    forward,
    forward_cached,
    init_params,
    meanpool,
    mlp,
    prepare_input,
)

_MARGIN = 1e-3
_KINKED = ("relu", "selu")


def _kink_margin(params, x):
    """Smallest distance of any relu/selu pre-activation from zero."""
    _, caches = forward_cached(params, x)
    worst = np.inf
    for spec, (_, z) in zip(params.arch, caches):
        if z is not None and spec.activation in _KINKED:
            worst = min(worst, float(np.abs(z).min()))
    return worst


GRAD_CASE_NAMES = ("dense_relu", "dense_selu", "conv_meanpool", "pinball")


def build_grad_case(name, seed):
    """A (params, x, targets, head) tuple safe for finite differencing.

    Classification heads get integer targets, the pinball head real ones.
    Inputs and parameters are redrawn (deterministically) until all branch
    margins clear ``_MARGIN``.
    """
    for attempt in range(50):
        rng = np.random.default_rng(
            np.random.SeedSequence((seed, attempt, GRAD_CASE_NAMES.index(name)))
        )
        if name == "dense_relu":
            arch = mlp(3, (8, 6), 4, activation="relu")
            n, head = 12, CrossEntropyHead()
        elif name == "dense_selu":
            arch = mlp(3, (10,), 4, activation="selu")
            n, head = 10, CrossEntropyHead()
        elif name == "conv_meanpool":
            arch = Architecture(
                (
                    conv1d(2, 4, 3, activation="selu"),
                    conv1d(4, 4, 3, activation="selu"),
                    meanpool(),
                    dense(4, 8, activation="selu"),
                    dense(8, 3),
                )
            )
            n, head = 6, CrossEntropyHead()
        elif name == "pinball":
            arch = mlp(2, (8, 8), 1, activation="relu")
            n, head = 10, PinballHead(0.3)
        else:
            raise ValueError(name)
        params = init_params(arch, rng)
        in_dim = 16 if name == "conv_meanpool" else arch.layers[0].in_dim
        x = rng.normal(size=(n, in_dim))
        xp = prepare_input(arch, x)
        if _kink_margin(params, xp) < _MARGIN:
            continue
        if isinstance(head, PinballHead):
            out = forward(params, xp)[:, 0]
            targets = out + rng.normal(size=n)
            if np.abs(targets - out).min() < _MARGIN:
                continue
        else:
            targets = rng.integers(0, arch.layers[-1].out_dim, size=n)
        return params, x, targets, head
    raise AssertionError(f"no well-separated draw found for case {name}")


def quantile_net_relu_margin(params, cache):
    """Smallest |pre-activation| across a quantile net's kinked dense layers."""
    from wavecp.online import _split_blocks

    pre, _, post = _split_blocks(params)
    _, _, pre_caches, _, post_caches, _ = cache
    margin = np.inf
    for part, caches in ((pre, pre_caches), (post, post_caches)):
        for spec, c in zip(part.arch.layers, caches):
            if spec.activation in _KINKED and c[1] is not None:
                margin = min(margin, float(np.min(np.abs(c[1]))))
    return margin


def build_lstm_grad_case(seed, exog_dim, lstm_layers):
    """A margin-safe (params, window, x, target, cache, output) for one
    windowed quantile network, used to finite-difference the recurrent path."""
    from wavecp.online import QuantileNetConfig, _forward_cached, quantile_net_architecture

    cfg = QuantileNetConfig(
        exog_dim=exog_dim,
        pre_hidden=(4,),
        lstm_hidden=3,
        lstm_layers=lstm_layers,
        post_hidden=(4,),
    )
    arch = quantile_net_architecture(cfg)
    for attempt in range(50):
        rng = np.random.default_rng(
            np.random.SeedSequence((seed, attempt, exog_dim, lstm_layers))
        )
        params = init_params(arch, rng)
        window = rng.normal(size=(4, cfg.pair_dim))
        x = rng.normal(size=exog_dim)
        out, cache = _forward_cached(params, window, x)
        if quantile_net_relu_margin(params, cache) < _MARGIN:
            continue
        offset = float(rng.uniform(0.1, 0.5) * rng.choice([-1.0, 1.0]))
        return params, window, x, out + offset, cache, out
    raise AssertionError("no margin-safe draw found for the quantile net")


class LinearSoftmaxStub:
    """Deterministic classifier stub: softmax of a fixed linear map.

    Stands in for a trained predictor wherever conformal logic only needs
    ``predict_proba``.
    """

    def __init__(self, w, b):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)

    @classmethod
    def random(cls, rng, in_dim, n_labels, scale=1.0):
        return cls(
            scale * rng.normal(size=(in_dim, n_labels)),
            scale * rng.normal(size=n_labels),
        )

    def predict_proba(self, x):
        logits = np.asarray(x, dtype=np.float64) @ self.w + self.b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)
