"""The two-stage residual pan-sharpening network.

Stage 1 stacks layers 1..L-1 (conv + ReLU) under an additive skip connection
over the (S+1)-band input; Stage 2 is a single linear conv layer that projects
the S+1 bands down to the S multispectral bands.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_core import (
    ConfigurationError,
    ConvKernel,
    add,
    check_tensor,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)

CHECKPOINT_MAGIC = b"DRPN"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


class CheckpointError(Exception):
    """A checkpoint file is corrupt or does not fit the requested network."""


@dataclass
class NetworkSpec:
    """Architecture of a DRPNN.

    ``filter_size`` is either one odd int used for every layer or a list of
    ``layers`` odd ints (square kernels) or (kh, kw) pairs.
    """

    bands: int = 4
    layers: int = 11
    hidden_channels: int = 64
    filter_size: object = 7
    relu_before_skip: bool = True

    def __post_init__(self):
        if self.layers < 2:
            raise ConfigurationError(f"need at least 2 layers, got {self.layers}")
        if self.bands < 1 or self.hidden_channels < 1:
            raise ConfigurationError("bands and hidden_channels must be positive")
        for kh, kw in self.kernel_sizes:
            if kh < 1 or kw < 1 or kh % 2 == 0 or kw % 2 == 0:
                raise ConfigurationError(f"filter sizes must be odd, got {kh}x{kw}")

    @property
    def kernel_sizes(self):
        fs = self.filter_size
        if isinstance(fs, (int, np.integer)):
            return [(int(fs), int(fs))] * self.layers
        sizes = [(int(s), int(s)) if np.isscalar(s) else (int(s[0]), int(s[1])) for s in fs]
        if len(sizes) != self.layers:
            raise ConfigurationError(f"{len(sizes)} filter sizes given for {self.layers} layers")
        return sizes

    @property
    def channel_plan(self):
        """[C_0, ..., C_L]. Layer L-1 emits S+1 bands so it can be added to the input."""
        s = self.bands
        return [s + 1] + [self.hidden_channels] * (self.layers - 2) + [s + 1, s]

    def layer_shapes(self):
        plan = self.channel_plan
        return [(plan[l + 1], plan[l], kh, kw) for l, (kh, kw) in enumerate(self.kernel_sizes)]

    def parameter_count(self):
        return sum(int(np.prod(shape)) + shape[0] for shape in self.layer_shapes())


@dataclass
class NetworkParams:
    layers: list

    def copy(self):
        return NetworkParams([k.copy() for k in self.layers])

    @classmethod
    def from_arrays(cls, arrays):
        """Inverse of :meth:`arrays`."""
        return cls([ConvKernel(w, b) for w, b in zip(arrays[::2], arrays[1::2])])

    def arrays(self):
        """Flat list of parameter arrays: weights then bias, layer by layer."""
        out = []
        for k in self.layers:
            out.extend((k.weights, k.bias))
        return out

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def check(self, spec):
        shapes = spec.layer_shapes()
        if len(self.layers) != len(shapes):
            raise ConfigurationError(f"params have {len(self.layers)} layers, spec expects {len(shapes)}")
        for l, (kern, shape) in enumerate(zip(self.layers, shapes), start=1):
            if kern.weights.shape != shape:
                raise ConfigurationError(f"layer {l} weights {kern.weights.shape} != expected {shape}")


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # F_{l-1} fed to layer l
    pre: list = field(default_factory=list)  # conv output of layer l
    post: list = field(default_factory=list)  # activation output of layer l
    stage1: np.ndarray = None


def init_network(spec, seed, dtype=np.float32):
    """He-style Gaussian weights (std sqrt(2 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for c_out, c_in, kh, kw in spec.layer_shapes():
        std = np.sqrt(2.0 / (c_in * kh * kw))
        w = (rng.standard_normal((c_out, c_in, kh, kw)) * std).astype(dtype)
        layers.append(ConvKernel(w, np.zeros(c_out, dtype=dtype)))
    return NetworkParams(layers)


def forward(params, spec, G):
    """Run the network on input ``G`` (n, S+1, h, w); returns ``(F, cache)``."""
    G = check_tensor(G, "G")
    if G.shape[1] != spec.bands + 1:
        raise ConfigurationError(f"input has {G.shape[1]} channels, network expects {spec.bands + 1}")
    cache = ForwardCache()
    h = G
    last_body = spec.layers - 1
    for l, kern in enumerate(params.layers[:-1], start=1):
        cache.inputs.append(h)
        z = conv2d_forward(h, kern)
        h = relu_forward(z) if (l < last_body or spec.relu_before_skip) else z
        cache.pre.append(z)
        cache.post.append(h)
    cache.stage1 = add(G, h)
    cache.inputs.append(cache.stage1)
    F = conv2d_forward(cache.stage1, params.layers[-1])
    cache.pre.append(F)
    cache.post.append(F)
    return F, cache


def backward(params, spec, cache, grad_F, return_input_grad=False):
    """Chain-rule gradients for every layer.

    Returns a list of ``(grad_weights, grad_bias)`` for layers 1..L, plus the
    gradient w.r.t. ``G`` when ``return_input_grad`` is set.
    """
    if len(cache.pre) != len(params.layers) or cache.stage1 is None:
        raise ConfigurationError("forward cache does not match the network parameters")
    if grad_F.shape != cache.pre[-1].shape:
        raise ConfigurationError(f"grad_F shape {grad_F.shape} != output shape {cache.pre[-1].shape}")
    L = len(params.layers)
    grads = [None] * L

    g_stage1, gw, gb = conv2d_backward(cache.stage1, params.layers[-1], grad_F)
    grads[-1] = (gw, gb)

    g = g_stage1  # the skip branch carries the same gradient straight to G
    for idx in range(L - 2, -1, -1):
        layer = idx + 1
        if layer < L - 1 or spec.relu_before_skip:
            g = relu_backward(cache.pre[idx], g)
        need_input = idx > 0 or return_input_grad
        g, gw, gb = conv2d_backward(cache.inputs[idx], params.layers[idx], g, need_input_grad=need_input)
        grads[idx] = (gw, gb)

    if return_input_grad:
        return grads, g_stage1 + g
    return grads


def save_checkpoint(params, spec, path):
    """Write a little-endian binary checkpoint.

    Layout: magic ``DRPN``, u32 version, u32 bands, u32 layers, u32 hidden
    channels, u32 relu_before_skip, u32 dtype code (1=f32, 2=f64), then
    ``layers`` pairs of u32 (kh, kw), u64 parameter count, then for each
    layer its weights followed by its bias.
    """
    params.check(spec)
    dtype = np.dtype(params.dtype).newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise ConfigurationError(f"unsupported parameter dtype {params.dtype}")
    header = struct.pack(
        "<4s6I", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, spec.bands, spec.layers,
        spec.hidden_channels, int(spec.relu_before_skip), _DTYPE_CODES[dtype],
    )
    sizes = b"".join(struct.pack("<2I", kh, kw) for kh, kw in spec.kernel_sizes)
    with open(path, "wb") as fh:
        fh.write(header + sizes + struct.pack("<Q", spec.parameter_count()))
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def load_checkpoint(path, expect_spec=None):
    """Read a checkpoint written by :func:`save_checkpoint`.

    If ``expect_spec`` is given, the stored architecture must match it.
    """
    data = Path(path).read_bytes()
    head = struct.calcsize("<4s6I")
    if len(data) < head:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, bands, layers, hidden, relu_flag, code = struct.unpack_from("<4s6I", data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    codes = {v: k for k, v in _DTYPE_CODES.items()}
    if code not in codes:
        raise CheckpointError(f"{path}: unknown dtype code {code}")
    dtype = codes[code]
    offset = head
    if len(data) < offset + 8 * layers + 8:
        raise CheckpointError(f"{path}: truncated layer table")
    sizes = [struct.unpack_from("<2I", data, offset + 8 * l) for l in range(layers)]
    offset += 8 * layers
    (count,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    try:
        spec = NetworkSpec(bands=bands, layers=layers, hidden_channels=hidden,
                           filter_size=sizes, relu_before_skip=bool(relu_flag))
    except ConfigurationError as exc:
        raise CheckpointError(f"{path}: invalid stored architecture: {exc}") from exc
    if count != spec.parameter_count():
        raise CheckpointError(f"{path}: parameter count {count} inconsistent with architecture "
                              f"({spec.parameter_count()})")
    expected = offset + count * dtype.itemsize
    if len(data) != expected:
        raise CheckpointError(f"{path}: payload is {len(data) - offset} bytes, expected {expected - offset}")
    if expect_spec is not None and (
        spec.layer_shapes() != expect_spec.layer_shapes()
        or spec.relu_before_skip != expect_spec.relu_before_skip
    ):
        raise CheckpointError(
            f"{path}: shape mismatch, checkpoint is S={spec.bands} L={spec.layers} "
            f"hidden={spec.hidden_channels} sizes={spec.kernel_sizes}, pipeline expects "
            f"S={expect_spec.bands} L={expect_spec.layers} hidden={expect_spec.hidden_channels} "
            f"sizes={expect_spec.kernel_sizes}"
        )

    kernels = []
    for shape in spec.layer_shapes():
        n_w = int(np.prod(shape))
        w = np.frombuffer(data, dtype=dtype, count=n_w, offset=offset).reshape(shape)
        offset += n_w * dtype.itemsize
        b = np.frombuffer(data, dtype=dtype, count=shape[0], offset=offset)
        offset += shape[0] * dtype.itemsize
        kernels.append(ConvKernel(w.astype(dtype.newbyteorder("="), copy=True),
                                  b.astype(dtype.newbyteorder("="), copy=True)))
    return NetworkParams(kernels), spec
