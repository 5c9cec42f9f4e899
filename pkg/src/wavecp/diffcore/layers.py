"""Forward and backward passes for feedforward stacks.

The engine evaluates an entire batch per layer with plain matmuls, so a
parameter set stacked along a leading model axis trains many models in one
pass. Inputs follow the shapes:

- dense chains: (..., n, d)
- conv1d chains: (..., n, length, channels); ``meanpool`` collapses the
  length axis so a dense readout can follow.

Reverse-mode gradients are accumulated by hand; no autodiff is involved.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericsError, ShapeError
from .params import Architecture, NetworkParams

SELU_LAMBDA = 1.05070098735548
SELU_ALPHA = 1.67326324235437


def relu(z):
    return np.maximum(z, 0.0)


def drelu(z):
    return (z > 0.0).astype(np.float64)


def selu(z):
    return SELU_LAMBDA * np.where(z > 0.0, z, SELU_ALPHA * np.expm1(z))


def dselu(z):
    return SELU_LAMBDA * np.where(z > 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))


def identity(z):
    return z


def didentity(z):
    return np.ones_like(z)


ACTIVATIONS = {
    "relu": (relu, drelu),
    "selu": (selu, dselu),
    "identity": (identity, didentity),
}


def prepare_input(arch: Architecture, x: np.ndarray) -> np.ndarray:
    """Reshape flat feature rows to (..., length, channels) for conv nets.

    Dense-first architectures pass through unchanged. Sample axes other than
    the last are preserved.
    """
    x = np.asarray(x, dtype=np.float64)
    first = arch.layers[0]
    if first.kind != "conv1d":
        return x
    channels = first.in_dim
    if x.shape[-1] % channels:
        raise ShapeError(
            f"cannot split {x.shape[-1]} features into {channels} channels", layer=0
        )
    length = x.shape[-1] // channels
    return x.reshape(*x.shape[:-1], length, channels)


def _check_finite(a: np.ndarray, layer: int, stage: str):
    if not np.isfinite(a).all():
        raise NumericsError(f"non-finite values in {stage}", layer=layer)


def _expand_bias(b: np.ndarray, target_ndim: int) -> np.ndarray:
    # Bias (out,) or (m, out) must land on the last axis of an activation
    # with target_ndim axes, broadcasting the model axis if present.
    if b.ndim == 1:
        return b
    return b.reshape(b.shape[0], *([1] * (target_ndim - 2)), b.shape[1])


def forward(params: NetworkParams, x: np.ndarray, check_finite: bool = True):
    """Run the network and return its output array."""
    out, _ = forward_cached(params, x, check_finite=check_finite)
    return out


def forward_cached(params: NetworkParams, x: np.ndarray, check_finite: bool = True):
    """Run the network, keeping per-layer inputs and pre-activations.

    Returns ``(output, caches)`` where ``caches[i]`` is ``(a_in, z)`` for
    parameterized layers and ``(a_in, None)`` for meanpool.
    """
    a = np.asarray(x, dtype=np.float64)
    caches = []
    for i, (spec, block) in enumerate(zip(params.arch, params.blocks)):
        if spec.kind == "dense":
            if a.shape[-1] != spec.in_dim:
                raise ShapeError(
                    f"expected {spec.in_dim} input features, got {a.shape[-1]}",
                    layer=i,
                )
            z = a @ block.w + _expand_bias(block.b, a.ndim)
            caches.append((a, z))
            a = ACTIVATIONS[spec.activation][0](z)
        elif spec.kind == "conv1d":
            if a.ndim < 2 or a.shape[-1] != spec.in_dim:
                raise ShapeError(
                    f"expected (..., length, {spec.in_dim}) input, got {a.shape}",
                    layer=i,
                )
            length = a.shape[-2]
            out_len = length - spec.kernel + 1
            if out_len <= 0:
                raise ShapeError(
                    f"sequence length {length} shorter than kernel {spec.kernel}",
                    layer=i,
                )
            z = np.zeros((*a.shape[:-2], out_len, spec.out_dim))
            for dk in range(spec.kernel):
                w_dk = block.w[..., dk, :, :]
                if w_dk.ndim == 3:
                    # Stacked (m, in, out) against activations (m, n, len, in):
                    # line the model axis up for the batched matmul.
                    w_dk = w_dk[:, None, :, :]
                z += a[..., dk : dk + out_len, :] @ w_dk
            z += _expand_bias(block.b, z.ndim)
            caches.append((a, z))
            a = ACTIVATIONS[spec.activation][0](z)
        elif spec.kind == "meanpool":
            if a.ndim < 2:
                raise ShapeError("meanpool needs a length axis", layer=i)
            caches.append((a, None))
            a = a.mean(axis=-2)
        else:
            raise ShapeError(
                f"layer kind {spec.kind!r} is not a feedforward layer", layer=i
            )
        if check_finite:
            _check_finite(a, i, "forward pass")
    return a, caches


def backward(params: NetworkParams, caches, d_out: np.ndarray):
    """Backpropagate ``d_out`` (gradient w.r.t. the network output).

    Returns ``(grads, d_in)`` where ``grads`` is a :class:`NetworkParams`
    with the same stacking as ``params`` holding parameter gradients summed
    over the example axis, and ``d_in`` is the gradient w.r.t. the input.
    """
    grads = [None] * len(params.blocks)
    delta = np.asarray(d_out, dtype=np.float64)
    for i in range(len(params.blocks) - 1, -1, -1):
        spec = params.arch.layers[i]
        block = params.blocks[i]
        a_in, z = caches[i]
        if spec.kind == "meanpool":
            length = a_in.shape[-2]
            delta = np.repeat(delta[..., None, :], length, axis=-2) / length
            continue
        dz = delta * ACTIVATIONS[spec.activation][1](z)
        if spec.kind == "dense":
            dw = np.swapaxes(a_in, -1, -2) @ dz
            db = dz.sum(axis=-2)
            grads[i] = type(block)(dw, db)
            delta = dz @ np.swapaxes(block.w, -1, -2)
        else:  # conv1d
            out_len = dz.shape[-2]
            dw = np.zeros_like(block.w)
            d_in = np.zeros_like(a_in)
            stacked = block.w.ndim == 4
            for dk in range(spec.kernel):
                a_slice = a_in[..., dk : dk + out_len, :]
                # (..., in, out) contribution per example, summed over the
                # example axis right below the optional model axis.
                contrib = np.swapaxes(a_slice, -1, -2) @ dz
                dw_dk = contrib.sum(axis=tuple(range(1 if stacked else 0, contrib.ndim - 2)))
                dw[..., dk, :, :] = dw_dk
                w_dk = block.w[..., dk, :, :]
                if stacked:
                    w_dk = w_dk[:, None, :, :]
                d_in[..., dk : dk + out_len, :] += dz @ np.swapaxes(w_dk, -1, -2)
            db = dz.sum(axis=tuple(range(1 if stacked else 0, dz.ndim - 1)))
            grads[i] = type(block)(dw, db)
            delta = d_in
    return NetworkParams(params.arch, grads), delta


def loss_and_grad(params: NetworkParams, x: np.ndarray, targets, head):
    """Mean loss over the example axis and its parameter gradients.

    Returns ``(loss, grads)``; ``loss`` is scalar for unstacked parameters
    and shape (m,) for stacked ones. ``grads`` matches ``params``.
    """
    out, caches = forward_cached(params, x)
    losses, d_out = head.per_example(out, np.asarray(targets))
    n = losses.shape[-1]
    loss = losses.mean(axis=-1)
    if not np.all(np.isfinite(loss)):
        raise NumericsError("non-finite loss", layer=len(params.blocks) - 1)
    grads, _ = backward(params, caches, d_out / n)
    return loss, grads
