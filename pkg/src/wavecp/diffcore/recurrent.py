"""Single-step LSTM cell with hand-derived backward pass.

The cell operates on one input vector at a time; sequence models drive it
step by step and stitch the returned gradients together themselves. Gates
are packed as [input | forget | cell | output] along the last parameter
axis, matching :class:`~wavecp.diffcore.params.LstmBlock`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .params import LstmBlock

# exp() stays finite and sigmoid/tanh are fully saturated well inside this
# range.
_GATE_CLIP = 60.0


def sigmoid(z):
    z = np.minimum(np.maximum(z, -_GATE_CLIP), _GATE_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def lstm_cell(block: LstmBlock, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """Advance the cell one step; returns ``(h_next, c_next)``."""
    h_next, c_next, _ = lstm_cell_cached(block, x, h, c)
    return h_next, c_next


def lstm_cell_cached(block: LstmBlock, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """Like :func:`lstm_cell` but also returns the cache for the backward pass."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    hid = block.hidden
    if x.shape != (block.wx.shape[0],):
        raise ShapeError(
            f"expected input of shape ({block.wx.shape[0]},), got {x.shape}"
        )
    if h.shape != (hid,) or c.shape != (hid,):
        raise ShapeError(f"expected state of shape ({hid},), got {h.shape}/{c.shape}")
    gates = x @ block.wx + h @ block.wh + block.b
    sig = sigmoid(gates)
    i = sig[:hid]
    f = sig[hid : 2 * hid]
    g = np.tanh(gates[2 * hid : 3 * hid])
    o = sig[3 * hid :]
    c_next = f * c + i * g
    tanh_c = np.tanh(c_next)
    h_next = o * tanh_c
    cache = (x, h, c, i, f, g, o, tanh_c)
    return h_next, c_next, cache


def lstm_cell_backward(block: LstmBlock, cache, dh_next: np.ndarray, dc_next: np.ndarray):
    """Backpropagate one step.

    ``dh_next``/``dc_next`` are gradients w.r.t. the step's outputs. Returns
    ``(dx, dh, dc, grads)`` with ``grads`` an :class:`LstmBlock` of parameter
    gradients for this step.
    """
    x, h, c, i, f, g, o, tanh_c = cache
    hid = i.size
    do = dh_next * tanh_c
    dc_total = dc_next + dh_next * o * (1.0 - tanh_c * tanh_c)
    dc = dc_total * f
    dgates = np.empty(4 * hid)
    dgates[:hid] = dc_total * g * i * (1.0 - i)
    dgates[hid : 2 * hid] = dc_total * c * f * (1.0 - f)
    dgates[2 * hid : 3 * hid] = dc_total * i * (1.0 - g * g)
    dgates[3 * hid :] = do * o * (1.0 - o)
    dx = block.wx @ dgates
    dh = block.wh @ dgates
    grads = LstmBlock(
        x[:, None] * dgates[None, :], h[:, None] * dgates[None, :], dgates
    )
    return dx, dh, dc, grads
