"""Layer kinds for the NHWC inference/training engine.

Every layer is a frozen dataclass describing its hyperparameters. The
engine calls ``init(prefix, in_shape, rng, scheme, dtype)`` to create
parameters, ``forward(params, prefix, x)`` which returns ``(y, cache)``,
and ``backward(params, prefix, cache, dy)`` which returns ``(dx, grads)``.
Shapes exclude the batch axis: ``(h, w, c)`` for images, ``(d,)`` for
vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    pass


def _he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _init_tensor(rng, scheme, shape, fan_in, dtype):
    if scheme == "zero":
        return np.zeros(shape, dtype=dtype)
    if scheme == "he_uniform":
        return _he_uniform(rng, shape, fan_in, dtype)
    raise ValueError(f"unknown init scheme {scheme!r}")


def same_padding(size: int, kernel: int, stride: int):
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def conv_output(size: int, kernel: int, stride: int, padding: str):
    if padding == "SAME":
        return same_padding(size, kernel, stride)
    if padding == "VALID":
        if size < kernel:
            raise ShapeMismatch(f"input extent {size} smaller than kernel {kernel}")
        return (size - kernel) // stride + 1, 0, 0
    raise ValueError(f"padding must be SAME or VALID, got {padding!r}")


def conv_forward(x, kernel, bias, stride, padding):
    """Direct im2col convolution. ``kernel`` has shape (k, k, c_in, c_out)."""
    n, h, w, c = x.shape
    k = kernel.shape[0]
    ho, top, bottom = conv_output(h, k, stride, padding)
    wo, left, right = conv_output(w, k, stride, padding)
    xp = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0))) if top + bottom + left + right else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    # (n, ho, wo, c, k, k) -> (n, ho, wo, k, k, c)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * c)
    y = cols @ kernel.reshape(k * k * c, -1)
    if bias is not None:
        y += bias
    return y.reshape(n, ho, wo, -1), (cols, xp.shape, (top, left), x.shape)


def conv_backward(dy, kernel, cache, stride):
    cols, padded_shape, (top, left), in_shape = cache
    n, ho, wo, c_out = dy.shape
    k = kernel.shape[0]
    c = kernel.shape[2]
    dy2 = dy.reshape(-1, c_out)
    d_kernel = (cols.T @ dy2).reshape(kernel.shape)
    d_bias = dy2.sum(axis=0)
    dcols = (dy2 @ kernel.reshape(k * k * c, c_out).T).reshape(n, ho, wo, k, k, c)
    dxp = np.zeros(padded_shape, dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
    h, w = in_shape[1], in_shape[2]
    return dxp[:, top:top + h, left:left + w, :], d_kernel, d_bias


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: str = "SAME"
    kind = "Conv"

    def __post_init__(self):
        if self.out_channels < 1 or self.kernel < 1 or self.stride < 1:
            raise ValueError(f"invalid Conv parameters {self}")
        if self.padding not in ("SAME", "VALID"):
            raise ValueError(f"padding must be SAME or VALID, got {self.padding!r}")

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"Conv expects (h, w, c) input, got {in_shape}")
        h, w, _ = in_shape
        return (conv_output(h, self.kernel, self.stride, self.padding)[0],
                conv_output(w, self.kernel, self.stride, self.padding)[0], self.out_channels)

    def init(self, prefix, in_shape, rng, scheme, dtype):
        k, c = self.kernel, in_shape[2]
        fan_in = k * k * c
        return {
            f"{prefix}.kernel": _init_tensor(rng, scheme, (k, k, c, self.out_channels), fan_in, dtype),
            f"{prefix}.bias": np.zeros(self.out_channels, dtype=dtype),
        }

    def forward(self, params, prefix, x):
        return conv_forward(x, params[f"{prefix}.kernel"], params[f"{prefix}.bias"],
                            self.stride, self.padding)

    def backward(self, params, prefix, cache, dy):
        dx, dk, db = conv_backward(dy, params[f"{prefix}.kernel"], cache, self.stride)
        return dx, {f"{prefix}.kernel": dk, f"{prefix}.bias": db}


@dataclass(frozen=True)
class MaxPool:
    size: int = 2
    kind = "MaxPool"

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"MaxPool expects (h, w, c) input, got {in_shape}")
        h, w, c = in_shape
        if h < self.size or w < self.size:
            raise ShapeMismatch(f"MaxPool {self.size} on {in_shape}")
        return h // self.size, w // self.size, c

    def init(self, prefix, in_shape, rng, scheme, dtype):
        return {}

    def forward(self, params, prefix, x):
        p = self.size
        n, h, w, c = x.shape
        ho, wo = h // p, w // p
        win = x[:, :ho * p, :wo * p, :].reshape(n, ho, p, wo, p, c)
        win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, p * p)
        # argmax returns the first maximum: row-major tie-breaking within the window
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, params, prefix, cache, dy):
        idx, in_shape = cache
        p = self.size
        n, h, w, c = in_shape
        ho, wo = dy.shape[1], dy.shape[2]
        dwin = np.zeros((n, ho, wo, c, p * p), dtype=dy.dtype)
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dwin = dwin.reshape(n, ho, wo, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(in_shape, dtype=dy.dtype)
        dx[:, :ho * p, :wo * p, :] = dwin.reshape(n, ho * p, wo * p, c)
        return dx, {}


@dataclass(frozen=True)
class ReLU:
    kind = "ReLU"

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def init(self, prefix, in_shape, rng, scheme, dtype):
        return {}

    def forward(self, params, prefix, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, prefix, cache, dy):
        return dy * cache, {}


@dataclass(frozen=True)
class Flatten:
    kind = "Flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def init(self, prefix, in_shape, rng, scheme, dtype):
        return {}

    def forward(self, params, prefix, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, prefix, cache, dy):
        return dy.reshape(cache), {}


@dataclass(frozen=True)
class FullyConnected:
    units: int
    kind = "FullyConnected"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("FullyConnected needs at least one unit")

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"FullyConnected expects a flat input, got {in_shape}")
        return (self.units,)

    def init(self, prefix, in_shape, rng, scheme, dtype):
        d = in_shape[0]
        return {
            f"{prefix}.weight": _init_tensor(rng, scheme, (d, self.units), d, dtype),
            f"{prefix}.bias": np.zeros(self.units, dtype=dtype),
        }

    def forward(self, params, prefix, x):
        return x @ params[f"{prefix}.weight"] + params[f"{prefix}.bias"], x

    def backward(self, params, prefix, cache, dy):
        W = params[f"{prefix}.weight"]
        return dy @ W.T, {f"{prefix}.weight": cache.T @ dy, f"{prefix}.bias": dy.sum(axis=0)}


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Softmax:
    kind = "Softmax"

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"Softmax expects a flat input, got {in_shape}")
        return tuple(in_shape)

    def init(self, prefix, in_shape, rng, scheme, dtype):
        return {}

    def forward(self, params, prefix, x):
        p = softmax(x)
        return p, p

    def backward(self, params, prefix, cache, dy):
        p = cache
        return p * (dy - np.sum(dy * p, axis=-1, keepdims=True)), {}


@dataclass(frozen=True)
class ResidualBlock:
    """conv3x3(stride) -> ReLU -> conv3x3 -> (+ skip) -> ReLU.

    The skip is the identity when shape is preserved, otherwise a 1x1
    projection convolution with the block's stride.
    """

    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: str = "SAME"
    kind = "ResidualBlock"

    def _parts(self):
        first = Conv(self.out_channels, self.kernel, self.stride, self.padding)
        second = Conv(self.out_channels, self.kernel, 1, "SAME")
        proj = Conv(self.out_channels, 1, self.stride, "SAME")
        return first, second, proj

    def needs_projection(self, in_shape):
        return in_shape[2] != self.out_channels or self.stride != 1

    def output_shape(self, in_shape):
        first, second, _ = self._parts()
        return second.output_shape(first.output_shape(in_shape))

    def init(self, prefix, in_shape, rng, scheme, dtype):
        first, second, proj = self._parts()
        params = first.init(f"{prefix}.conv1", in_shape, rng, scheme, dtype)
        params.update(second.init(f"{prefix}.conv2", first.output_shape(in_shape), rng, scheme, dtype))
        if self.needs_projection(in_shape):
            params.update(proj.init(f"{prefix}.proj", in_shape, rng, scheme, dtype))
        return params

    def forward(self, params, prefix, x):
        first, second, proj = self._parts()
        h1, c1 = first.forward(params, f"{prefix}.conv1", x)
        mask1 = h1 > 0
        h1 = h1 * mask1
        h2, c2 = second.forward(params, f"{prefix}.conv2", h1)
        if f"{prefix}.proj.kernel" in params:
            skip, cp = proj.forward(params, f"{prefix}.proj", x)
        else:
            skip, cp = x, None
        out = h2 + skip
        mask2 = out > 0
        return out * mask2, (c1, mask1, c2, cp, mask2)

    def backward(self, params, prefix, cache, dy):
        first, second, proj = self._parts()
        c1, mask1, c2, cp, mask2 = cache
        d_out = dy * mask2
        dh1, g2 = second.backward(params, f"{prefix}.conv2", c2, d_out)
        dx, g1 = first.backward(params, f"{prefix}.conv1", c1, dh1 * mask1)
        grads = {**g1, **g2}
        if cp is not None:
            dskip, gp = proj.backward(params, f"{prefix}.proj", cp, d_out)
            grads.update(gp)
            dx = dx + dskip
        else:
            dx = dx + d_out
        return dx, grads


LAYER_KINDS = {cls.kind: cls for cls in (Conv, MaxPool, ReLU, Flatten, FullyConnected, Softmax,
                                         ResidualBlock)}
