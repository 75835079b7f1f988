"""Rank-4 tensor primitives: same-padded 2-D convolution, ReLU and addition.

Tensors are plain ``numpy.ndarray`` objects laid out as (n, c, h, w), row-major.
Every primitive computes in the dtype of its inputs, so float32 arrays take the
fast path and float64 arrays give the high-precision "oracle mode" used by the
gradient checks.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Largest im2col buffer (in elements) built in one go; bigger batches are chunked.
_IM2COL_LIMIT = 1 << 24


class ConfigurationError(ValueError):
    """Raised when shapes or settings are inconsistent."""


@dataclass
class ConvKernel:
    """Weights (c_out, c_in, kh, kw) and bias (c_out,) of one conv layer."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ConfigurationError(f"kernel weights must be rank 4, got shape {self.weights.shape}")
        c_out, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {kh}x{kw}")
        if self.bias.shape != (c_out,):
            raise ConfigurationError(f"bias shape {self.bias.shape} does not match {c_out} output channels")

    @property
    def c_out(self):
        return self.weights.shape[0]

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def size(self):
        return self.weights.shape[2:]

    def copy(self):
        return ConvKernel(self.weights.copy(), self.bias.copy())


def check_tensor(x, name="tensor"):
    """Validate that ``x`` is a rank-4 array and return it."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ConfigurationError(f"{name} must be rank 4 (n, c, h, w), got shape {x.shape}")
    return x


def _im2col(x, kh, kw):
    # (n, c, h, w) -> (c*kh*kw, n*h*w), zero "same" padding
    n, c, h, w = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # n, c, h, w, kh, kw
    cols = np.ascontiguousarray(windows.transpose(1, 4, 5, 0, 2, 3))
    return cols.reshape(c * kh * kw, n * h * w)


def _batch_chunks(x, kh, kw):
    n, c, h, w = x.shape
    per_item = c * kh * kw * h * w
    step = max(1, _IM2COL_LIMIT // max(per_item, 1))
    return [slice(i, min(i + step, n)) for i in range(0, n, step)]


def _correlate(x, weights):
    # bias-free same-padded correlation, chunked over the batch
    n, _, h, w = x.shape
    c_out, _, kh, kw = weights.shape
    wmat = weights.reshape(c_out, -1)
    out = np.empty((n, c_out, h, w), dtype=np.result_type(x, weights))
    for sl in _batch_chunks(x, kh, kw):
        m = sl.stop - sl.start
        cols = _im2col(x[sl], kh, kw)
        out[sl] = (wmat @ cols).reshape(c_out, m, h, w).transpose(1, 0, 2, 3)
    return out


def conv2d_forward(x, kernel):
    """Same-padded, stride-1 2-D convolution (cross-correlation) plus bias.

    ``out[n, o, y, x] = bias[o] + sum_{i, dy, dx} x[n, i, y+dy-ph, x+dx-pw] * W[o, i, dy, dx]``
    with out-of-range input read as zero.
    """
    x = check_tensor(x, "input")
    if x.shape[1] != kernel.c_in:
        raise ConfigurationError(f"input has {x.shape[1]} channels, kernel expects {kernel.c_in}")
    out = _correlate(x, kernel.weights)
    out += kernel.bias[None, :, None, None]
    return out


def conv2d_backward(x, kernel, grad_output, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` with respect to input, weights and bias.

    Returns ``(grad_input, grad_weights, grad_bias)``; ``grad_input`` is None when
    ``need_input_grad`` is false (first layer of a network).
    """
    x = check_tensor(x, "input")
    grad_output = check_tensor(grad_output, "grad_output")
    n, c_in, h, w = x.shape
    if c_in != kernel.c_in:
        raise ConfigurationError(f"input has {c_in} channels, kernel expects {kernel.c_in}")
    if grad_output.shape != (n, kernel.c_out, h, w):
        raise ConfigurationError(
            f"grad_output shape {grad_output.shape} does not match forward output {(n, kernel.c_out, h, w)}"
        )
    c_out, _, kh, kw = kernel.weights.shape
    dtype = np.result_type(x, kernel.weights, grad_output)

    grad_weights = np.zeros((c_out, c_in * kh * kw), dtype=dtype)
    for sl in _batch_chunks(x, kh, kw):
        cols = _im2col(x[sl], kh, kw)
        gout = grad_output[sl].transpose(1, 0, 2, 3).reshape(c_out, -1)
        grad_weights += gout @ cols.T
    grad_weights = grad_weights.reshape(c_out, c_in, kh, kw)
    grad_bias = grad_output.sum(axis=(0, 2, 3), dtype=dtype)

    grad_input = None
    if need_input_grad:
        # transpose of same-padded correlation = correlation with the flipped,
        # channel-swapped kernel
        flipped = np.ascontiguousarray(kernel.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        grad_input = _correlate(grad_output, flipped)
    return grad_input, grad_weights, grad_bias


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_output):
    """Mask ``grad_output`` to zero wherever ``x <= 0``."""
    if np.shape(x) != np.shape(grad_output):
        raise ConfigurationError(f"shape mismatch: {np.shape(x)} vs {np.shape(grad_output)}")
    return np.where(x > 0, grad_output, 0).astype(np.result_type(grad_output), copy=False)


def add(a, b):
    if np.shape(a) != np.shape(b):
        raise ConfigurationError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")
    return np.add(a, b)
