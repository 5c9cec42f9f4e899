"""Probability heads and loss functions with hand-derived gradients.

All functions broadcast over arbitrary leading axes; the convention is that
network outputs have shape (..., n, k) with examples on axis -2.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

# Floor applied inside every log so that a zero probability yields a large
# finite score instead of an infinity.
PROB_FLOOR = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, max-subtracted for overflow safety."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(probs: np.ndarray, labels) -> np.ndarray:
    """Negative log of the probability assigned to each label.

    ``probs`` has shape (..., k); ``labels`` broadcasts against the leading
    axes. Probabilities are floored at ``PROB_FLOOR`` before the log.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[-1]):
        raise ConfigError(
            f"labels must lie in [0, {probs.shape[-1] - 1}]"
        )
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)
    return -np.log(np.maximum(picked[..., 0], PROB_FLOOR))


def pinball_loss(q: float, y, y_hat) -> np.ndarray:
    """Tilted absolute error for quantile regression at level ``q``.

    Underestimates (y above y_hat) cost ``q`` per unit, overestimates cost
    ``1 - q`` per unit.
    """
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"quantile level must lie in [0, 1], got {q}")
    r = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return np.where(r >= 0.0, q * r, (q - 1.0) * r)


class CrossEntropyHead:
    """Mean cross entropy between softmax(outputs) and integer labels.

    ``per_example`` returns the loss vector and the gradient of its sum with
    respect to the raw outputs; the network engine applies the 1/n mean
    scaling when it backpropagates.
    """

    def per_example(self, outputs: np.ndarray, targets: np.ndarray):
        targets = np.asarray(targets)
        z = outputs - outputs.max(axis=-1, keepdims=True)
        e = np.exp(z)
        denom = e.sum(axis=-1, keepdims=True)
        log_p = z - np.log(denom)
        losses = -np.take_along_axis(
            log_p, targets[..., None].astype(np.int64), axis=-1
        )[..., 0]
        grad = e / denom
        np.put_along_axis(
            grad,
            targets[..., None].astype(np.int64),
            np.take_along_axis(grad, targets[..., None].astype(np.int64), axis=-1)
            - 1.0,
            axis=-1,
        )
        return losses, grad


class PinballHead:
    """Mean pinball loss for a single-output quantile regressor.

    At the kink (y == y_hat) the sub-gradient from the underestimation side
    is used, so the output gradient there is -q rather than zero.
    """

    def __init__(self, q: float):
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"quantile level must lie in [0, 1], got {q}")
        self.q = q

    def per_example(self, outputs: np.ndarray, targets: np.ndarray):
        if outputs.shape[-1] != 1:
            raise ConfigError(
                f"pinball head expects single-output networks, got {outputs.shape[-1]}"
            )
        y = np.asarray(targets, dtype=np.float64)
        r = y - outputs[..., 0]
        losses = np.where(r >= 0.0, self.q * r, (self.q - 1.0) * r)
        d_out = np.where(r >= 0.0, -self.q, 1.0 - self.q)
        return losses, d_out[..., None]
