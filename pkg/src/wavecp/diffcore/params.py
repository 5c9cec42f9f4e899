"""Network descriptors, parameter containers, initialization, and serialization.

An :class:`Architecture` is an immutable tuple of layer specs. The matching
:class:`NetworkParams` holds one parameter block per layer (``None`` for
parameter-free layers). Every array is float64. Parameter blocks may carry an
extra leading model axis so that many same-shaped networks can be trained in
one vectorized pass; see :func:`stack_params` / :func:`unstack_params`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, DataFormatError

KINDS = ("dense", "conv1d", "meanpool", "lstm")
ACTIVATION_NAMES = ("identity", "relu", "selu")


@dataclass(frozen=True)
class LayerSpec:
    """Shape and activation of a single layer.

    ``in_dim``/``out_dim`` are feature counts for dense layers, channel
    counts for conv1d, and input/hidden sizes for lstm. ``kernel`` is the
    conv1d tap count and ignored elsewhere. ``meanpool`` averages over the
    time axis and has no parameters or dimensions of its own.
    """

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    activation: str = "identity"
    kernel: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATION_NAMES:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.kind in ("dense", "conv1d", "lstm"):
            if self.in_dim <= 0 or self.out_dim <= 0:
                raise ConfigError(
                    f"{self.kind} layer needs positive in_dim/out_dim, "
                    f"got {self.in_dim}/{self.out_dim}"
                )
        if self.kind == "conv1d" and self.kernel <= 0:
            raise ConfigError("conv1d layer needs a positive kernel size")
        if self.kind == "lstm" and self.activation != "identity":
            raise ConfigError("lstm layers use fixed gate nonlinearities")


@dataclass(frozen=True)
class Architecture:
    layers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigError("architecture needs at least one layer")

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)


def dense(in_dim, out_dim, activation="identity"):
    return LayerSpec("dense", in_dim, out_dim, activation)


def conv1d(in_channels, out_channels, kernel, activation="identity"):
    return LayerSpec("conv1d", in_channels, out_channels, activation, kernel)


def meanpool():
    return LayerSpec("meanpool")


def lstm(in_dim, hidden):
    return LayerSpec("lstm", in_dim, hidden)


def mlp(in_dim, hidden, out_dim, activation="relu"):
    """Fully connected stack with a linear output layer.

    ``hidden`` is a sequence of hidden widths; each hidden layer applies
    ``activation`` and the final layer is identity (scores or logits).
    """
    dims = [in_dim, *hidden, out_dim]
    layers = [
        dense(dims[i], dims[i + 1], activation if i < len(dims) - 2 else "identity")
        for i in range(len(dims) - 1)
    ]
    return Architecture(tuple(layers))


@dataclass
class DenseBlock:
    w: np.ndarray  # (in, out) or (m, in, out)
    b: np.ndarray  # (out,) or (m, out)

    def arrays(self):
        return [self.w, self.b]


@dataclass
class Conv1dBlock:
    w: np.ndarray  # (kernel, in, out) or (m, kernel, in, out)
    b: np.ndarray  # (out,) or (m, out)

    def arrays(self):
        return [self.w, self.b]


@dataclass
class LstmBlock:
    """Gate parameters packed along the last axis in [input|forget|cell|output] order."""

    wx: np.ndarray  # (in, 4 * hidden)
    wh: np.ndarray  # (hidden, 4 * hidden)
    b: np.ndarray  # (4 * hidden,)

    @property
    def hidden(self):
        return self.wh.shape[-2]

    def arrays(self):
        return [self.wx, self.wh, self.b]


@dataclass
class NetworkParams:
    arch: Architecture
    blocks: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.blocks) != len(self.arch.layers):
            raise ConfigError(
                f"{len(self.blocks)} parameter blocks for "
                f"{len(self.arch.layers)} layers"
            )

    def arrays(self):
        """All parameter arrays in layer order (skipping parameter-free layers)."""
        out = []
        for block in self.blocks:
            if block is not None:
                out.extend(block.arrays())
        return out


def _glorot(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(arch: Architecture, rng: np.random.Generator) -> NetworkParams:
    """Draw fresh parameters for ``arch``.

    Weights are uniform on +-sqrt(6 / (fan_in + fan_out)); biases start at
    zero except the lstm forget gate, which starts at one. Draws happen in
    layer order so a given generator state always produces the same network.
    """
    blocks = []
    for spec in arch:
        if spec.kind == "dense":
            w = _glorot(rng, spec.in_dim, spec.out_dim, (spec.in_dim, spec.out_dim))
            b = np.zeros(spec.out_dim)
            blocks.append(DenseBlock(w, b))
        elif spec.kind == "conv1d":
            fan_in = spec.kernel * spec.in_dim
            fan_out = spec.kernel * spec.out_dim
            w = _glorot(rng, fan_in, fan_out, (spec.kernel, spec.in_dim, spec.out_dim))
            b = np.zeros(spec.out_dim)
            blocks.append(Conv1dBlock(w, b))
        elif spec.kind == "lstm":
            h = spec.out_dim
            wx = _glorot(rng, spec.in_dim, h, (spec.in_dim, 4 * h))
            wh = _glorot(rng, h, h, (h, 4 * h))
            b = np.zeros(4 * h)
            b[h : 2 * h] = 1.0
            blocks.append(LstmBlock(wx, wh, b))
        else:
            blocks.append(None)
    return NetworkParams(arch, blocks)


def n_params(params: NetworkParams) -> int:
    """Scalar parameter count of one model (leading model axes excluded)."""
    return sum(int(np.prod(_base_shape(params, a))) for a in params.arrays())


def is_stacked(params: NetworkParams) -> bool:
    """True when parameter arrays carry a leading model axis."""
    for spec, block in zip(params.arch, params.blocks):
        if block is None:
            continue
        if spec.kind == "dense":
            return block.w.ndim == 3
        if spec.kind == "conv1d":
            return block.w.ndim == 4
        if spec.kind == "lstm":
            return block.wx.ndim == 3
    raise ConfigError("architecture has no parameterized layers")


def model_count(params: NetworkParams) -> int:
    """Number of stacked models (1 for an unstacked parameter set)."""
    if not is_stacked(params):
        return 1
    for block in params.blocks:
        if block is not None:
            return block.arrays()[0].shape[0]
    raise ConfigError("architecture has no parameterized layers")


def _base_shape(params: NetworkParams, array: np.ndarray):
    if is_stacked(params):
        return array.shape[1:]
    return array.shape


def copy_params(params: NetworkParams) -> NetworkParams:
    blocks = []
    for block in params.blocks:
        if block is None:
            blocks.append(None)
        elif isinstance(block, DenseBlock):
            blocks.append(DenseBlock(block.w.copy(), block.b.copy()))
        elif isinstance(block, Conv1dBlock):
            blocks.append(Conv1dBlock(block.w.copy(), block.b.copy()))
        else:
            blocks.append(LstmBlock(block.wx.copy(), block.wh.copy(), block.b.copy()))
    return NetworkParams(params.arch, blocks)


def stack_params(models: list) -> NetworkParams:
    """Stack same-architecture parameter sets along a new leading model axis."""
    if not models:
        raise ConfigError("nothing to stack")
    arch = models[0].arch
    for p in models[1:]:
        if p.arch != arch:
            raise ConfigError("cannot stack differing architectures")
    blocks = []
    for i, block in enumerate(models[0].blocks):
        if block is None:
            blocks.append(None)
            continue
        cls = type(block)
        stacked = [
            np.stack([p.blocks[i].arrays()[j] for p in models])
            for j in range(len(block.arrays()))
        ]
        blocks.append(cls(*stacked))
    return NetworkParams(arch, blocks)


def unstack_params(params: NetworkParams) -> list:
    """Split a stacked parameter set back into per-model copies."""
    m = model_count(params)
    out = []
    for k in range(m):
        blocks = []
        for block in params.blocks:
            if block is None:
                blocks.append(None)
            else:
                cls = type(block)
                blocks.append(cls(*[a[k].copy() for a in block.arrays()]))
        out.append(NetworkParams(params.arch, blocks))
    return out


def flatten_params(params: NetworkParams) -> np.ndarray:
    """Concatenate all arrays of an unstacked parameter set into one vector."""
    if is_stacked(params):
        raise ConfigError("flatten_params expects an unstacked parameter set")
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten_like(params: NetworkParams, vec: np.ndarray) -> NetworkParams:
    """Inverse of :func:`flatten_params` using ``params`` as the shape template."""
    vec = np.asarray(vec, dtype=np.float64)
    out = copy_params(params)
    pos = 0
    for a in out.arrays():
        a[...] = vec[pos : pos + a.size].reshape(a.shape)
        pos += a.size
    if pos != vec.size:
        raise ConfigError(f"expected {pos} values, got {vec.size}")
    return out


def add_flat(params: NetworkParams, model_index: Optional[int], vec: np.ndarray):
    """Add a flat per-model vector into ``params`` in place.

    For stacked parameters ``model_index`` selects the model slice; pass
    None for unstacked parameters.
    """
    pos = 0
    for a in params.arrays():
        target = a if model_index is None else a[model_index]
        target += vec[pos : pos + target.size].reshape(target.shape)
        pos += target.size


_FORMAT = "wavecp-params-v1"


def params_to_bytes(params: NetworkParams) -> bytes:
    """Serialize an unstacked parameter set.

    Layout: one JSON header line describing the architecture, then the
    concatenated parameter arrays as little-endian float64.
    """
    if is_stacked(params):
        raise ConfigError("serialization expects an unstacked parameter set")
    header = {
        "format": _FORMAT,
        "layers": [
            {
                "kind": s.kind,
                "in_dim": s.in_dim,
                "out_dim": s.out_dim,
                "activation": s.activation,
                "kernel": s.kernel,
            }
            for s in params.arch
        ],
    }
    payload = flatten_params(params).astype("<f8").tobytes()
    return json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def params_from_bytes(data: bytes) -> NetworkParams:
    """Inverse of :func:`params_to_bytes` with format validation."""
    newline = data.find(b"\n")
    if newline < 0:
        raise DataFormatError("missing parameter header line")
    try:
        header = json.loads(data[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"bad parameter header: {exc}") from exc
    if header.get("format") != _FORMAT:
        raise DataFormatError(f"unsupported format {header.get('format')!r}")
    try:
        arch = Architecture(
            tuple(
                LayerSpec(
                    s["kind"], s["in_dim"], s["out_dim"], s["activation"], s["kernel"]
                )
                for s in header["layers"]
            )
        )
    except (KeyError, TypeError, ConfigError) as exc:
        raise DataFormatError(f"bad architecture header: {exc}") from exc
    rng = np.random.default_rng(0)
    template = init_params(arch, rng)
    vec = np.frombuffer(data[newline + 1 :], dtype="<f8")
    expected = n_params(template)
    if vec.size != expected:
        raise DataFormatError(f"expected {expected} parameters, got {vec.size}")
    return unflatten_like(template, vec.astype(np.float64))
