"""Minimal numpy network substrate: typed layers, losses, exact gradients."""

from .layers import (
    ACTIVATIONS,
    SELU_ALPHA,
    SELU_LAMBDA,
    backward,
    forward,
    forward_cached,
    loss_and_grad,
    prepare_input,
)
from .losses import (
    PROB_FLOOR,
    CrossEntropyHead,
    PinballHead,
    cross_entropy,
    log_softmax,
    pinball_loss,
    softmax,
)
from .params import (
    Architecture,
    Conv1dBlock,
    DenseBlock,
    LayerSpec,
    LstmBlock,
    NetworkParams,
    add_flat,
    conv1d,
    copy_params,
    dense,
    flatten_params,
    init_params,
    is_stacked,
    lstm,
    meanpool,
    mlp,
    model_count,
    n_params,
    params_from_bytes,
    params_to_bytes,
    stack_params,
    unflatten_like,
    unstack_params,
)
from .recurrent import lstm_cell, lstm_cell_backward, lstm_cell_cached, sigmoid

__all__ = [
    "ACTIVATIONS",
    "Architecture",
    "Conv1dBlock",
    "CrossEntropyHead",
    "DenseBlock",
    "LayerSpec",
    "LstmBlock",
    "NetworkParams",
    "PROB_FLOOR",
    "PinballHead",
    "SELU_ALPHA",
    "SELU_LAMBDA",
    "add_flat",
    "backward",
    "conv1d",
    "copy_params",
    "cross_entropy",
    "dense",
    "flatten_params",
    "forward",
    "forward_cached",
    "init_params",
    "is_stacked",
    "log_softmax",
    "loss_and_grad",
    "lstm",
    "lstm_cell",
    "lstm_cell_backward",
    "lstm_cell_cached",
    "meanpool",
    "mlp",
    "model_count",
    "n_params",
    "params_from_bytes",
    "params_to_bytes",
    "pinball_loss",
    "prepare_input",
    "sigmoid",
    "softmax",
    "stack_params",
    "unflatten_like",
    "unstack_params",
]
