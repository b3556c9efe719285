"""Trainable layers as fused tape operations.

Feature maps are (B, C, H, W); token tensors are (B, L, D).  Convolutions
support zero or periodic padding; the forecasting network uses periodic
padding throughout so translation covariance holds exactly on the torus
(constant input gives constant output with no border effects).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, record_op

__all__ = [
    "conv2d",
    "linear",
    "layer_norm",
    "nearest_upsample2",
    "Module",
    "Linear",
    "Conv2d",
    "LayerNorm",
    "Downsample2",
    "Upsample2",
]


def _pad2d(x: np.ndarray, p: int, mode: str) -> np.ndarray:
    if p == 0:
        return x
    width = ((0, 0), (0, 0), (p, p), (p, p))
    if mode == "zeros":
        return np.pad(x, width)
    if mode == "periodic":
        return np.pad(x, width, mode="wrap")
    raise ConfigurationError(f"unknown padding mode {mode!r}")


def _fold_wrap(g: np.ndarray, p: int, n: int, axis: int) -> np.ndarray:
    """Collapse wrap-padding gradients back onto the core extent n."""
    sl = [slice(None)] * g.ndim
    sl[axis] = slice(p, p + n)
    core = np.ascontiguousarray(g[tuple(sl)])
    if p:
        dst = [slice(None)] * g.ndim
        sl[axis] = slice(0, p)
        dst[axis] = slice(n - p, n)
        core[tuple(dst)] += g[tuple(sl)]
        sl[axis] = slice(p + n, n + 2 * p)
        dst[axis] = slice(0, p)
        core[tuple(dst)] += g[tuple(sl)]
    return core


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    pad_mode: str = "zeros",
) -> Tensor:
    """2-D cross-correlation of (B, C, H, W) with (C_out, C_in, kh, kw)."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be (B, C, H, W), got {x.shape}")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D, got {weight.shape}")
    b, c, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    if cin != c:
        raise DimensionError(f"conv2d channel mismatch: input {c}, weight {cin}")
    if padding > min(h, w):
        raise DimensionError("conv2d padding larger than the grid is unsupported")
    xp = _pad2d(x.data, padding, pad_mode)
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d kernel larger than padded input")
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5)).reshape(b, ho * wo, c * kh * kw)
    wmat = weight.data.reshape(cout, c * kh * kw).T
    out = cols @ wmat
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out.transpose(0, 2, 1).reshape(b, cout, ho, wo))

    def backward(g):
        gmat = g.reshape(b, cout, ho * wo).transpose(0, 2, 1)
        gw = np.tensordot(cols, gmat, axes=([0, 1], [0, 1])).T.reshape(weight.shape)
        gcols = (gmat @ wmat.T).reshape(b, ho, wo, c, kh, kw)
        gxp = np.zeros((b, c, hp, wp))
        for di in range(kh):
            for dj in range(kw):
                gxp[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride] += (
                    gcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
                )
        if padding == 0:
            gx = gxp
        elif pad_mode == "zeros":
            gx = np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + w])
        else:
            gx = _fold_wrap(_fold_wrap(gxp, padding, h, 2), padding, w, 3)
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record_op(out, inputs, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map along the last axis: x (..., D_in) @ weight (D_in, D_out) + bias."""
    y = T.matmul(x, weight)
    if bias is not None:
        y = T.add(y, bias)
    return y


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        ggamma = (g * xhat).sum(axis=lead)
        gbeta = g.sum(axis=lead)
        gh = g * gamma.data
        gx = inv * (
            gh
            - gh.mean(axis=-1, keepdims=True)
            - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, ggamma, gbeta

    return record_op(out, (x, gamma, beta), backward)


def nearest_upsample2(x: Tensor) -> Tensor:
    """Duplicate each cell of (B, C, H, W) into a 2x2 block."""
    if x.ndim != 4:
        raise DimensionError(f"nearest_upsample2 input must be 4-D, got {x.shape}")
    b, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return record_op(out, (x,), backward)


# ---------------------------------------------------------------------------
# module registry


class Module:
    """Minimal parameter container with recursive named parameter traversal."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _init_array(rng: np.random.Generator, shape: tuple[int, ...], std: float, init: str) -> np.ndarray:
    if init == "zero":
        return np.zeros(shape)
    if init == "normal":
        return std * rng.standard_normal(shape)
    raise ConfigurationError(f"unknown init {init!r}")


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, init: str = "normal", bias: bool = True):
        super().__init__()
        std = (1.0 / d_in) ** 0.5
        self.weight = Tensor(_init_array(rng, (d_in, d_out), std, init), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        pad_mode: str = "zeros",
        init: str = "normal",
    ):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        std = (2.0 / (c_in * kernel * kernel)) ** 0.5
        self.weight = Tensor(_init_array(rng, (c_out, c_in, kernel, kernel), std, init), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.pad_mode)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class Downsample2(Module):
    """Halve spatial extents with a stride-2 convolution."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, pad_mode: str = "periodic"):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, rng, stride=2, padding=1, pad_mode=pad_mode)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Upsample2(Module):
    """Double spatial extents: nearest-neighbor repeat followed by a conv."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, pad_mode: str = "periodic"):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, rng, stride=1, padding=1, pad_mode=pad_mode)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(nearest_upsample2(x))
