"""Minimal dense/conv layer zoo with hand-written reverse-mode gradients.

Exactly the pieces the pose-regression networks need: Conv2d, MaxPool2d,
ReLU, Dropout (inverted scaling, train-only), Linear, Flatten, plus the
Euclidean loss, gaussian/xavier initializers and momentum SGD.  Arrays are
float32 by default; graphs can be built in float64 for gradient checking.
Explicit reductions (loss, bias gradients) accumulate in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, MissingGrad, ShapeMismatch


class Tensor:
    """N-d value plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray, grad: np.ndarray | None = None):
        self.data = data
        self.grad = grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# initializers


def init_gaussian(t: Tensor, std: float = 0.01, *, rng: np.random.Generator) -> None:
    """Zero-mean gaussian fill with the given std."""
    t.data[...] = rng.normal(0.0, std, size=t.shape).astype(t.dtype)


def _fan_in_out(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 2:  # linear: (in, out)
        return shape[0], shape[1]
    if len(shape) == 4:  # conv: (out, in, kh, kw)
        receptive = shape[2] * shape[3]
        return shape[1] * receptive, shape[0] * receptive
    raise ShapeMismatch(f"no fan convention for shape {shape}")


def init_xavier(t: Tensor, *, rng: np.random.Generator) -> None:
    """Uniform fill in +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = _fan_in_out(t.shape)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    t.data[...] = rng.uniform(-bound, bound, size=t.shape).astype(t.dtype)


# ---------------------------------------------------------------------------
# layers


class Layer:
    """Base: forward caches whatever backward needs; backward returns dx and
    accumulates parameter gradients (+=, so shared parameters just work)."""

    def params(self) -> dict[str, Tensor]:
        return {}

    def forward(self, x: np.ndarray, *, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _im2col(x: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Extract (n*oh*ow, c*k*k) patch matrix from padded NCHW input."""
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    sn, sc, sh, sw = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, c, k, k),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return patches.reshape(n * oh * ow, c * k * k), oh, ow


def _col2im(dcols: np.ndarray, n: int, c: int, h: int, w: int,
            k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Scatter-add column gradients back into padded image coordinates."""
    dx = np.zeros((n, c, h, w), dtype=dcols.dtype)
    dcols = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for ki in range(k):
        hi = ki + stride * oh
        for kj in range(k):
            wi = kj + stride * ow
            dx[:, :, ki:hi:stride, kj:wi:stride] += dcols[:, :, ki, kj]
    return dx


class Conv2d(Layer):
    """Cross-correlation plus bias over NCHW input."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0, dtype=np.float32):
        if min(in_channels, out_channels, kernel, stride) < 1:
            raise InvalidConfig("conv parameters must be positive")
        if padding < 0 or padding >= kernel:
            raise InvalidConfig(f"padding {padding} must be in [0, kernel)")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.weight = Tensor.zeros((out_channels, in_channels, kernel, kernel), dtype)
        self.bias = Tensor.zeros((out_channels,), dtype)
        self._cache = None

    def params(self):
        return {"w": self.weight, "b": self.bias}

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch(
                f"conv output would be {oh}x{ow} for input {h}x{w}"
            )
        return oh, ow

    def forward(self, x, *, train=False, rng=None):
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeMismatch(f"expected {self.in_channels} channels, got {c}")
        oh, ow = self.out_hw(h, w)
        if self.padding:
            p = self.padding
            x_pad = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        else:
            x_pad = x
        cols, oh, ow = _im2col(x_pad, self.kernel, self.stride)
        w_mat = self.weight.data.reshape(self.out_channels, -1)
        out = cols @ w_mat.T + self.bias.data
        self._cache = (cols, (n, c, h, w), (oh, ow))
        return out.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, dout):
        cols, (n, c, h, w), (oh, ow) = self._cache
        dout_mat = dout.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        dw = dout_mat.T @ cols
        self.weight.ensure_grad()[...] += dw.reshape(self.weight.shape)
        self.bias.ensure_grad()[...] += dout_mat.sum(
            axis=0, dtype=np.float64
        ).astype(self.bias.dtype)
        dcols = dout_mat @ self.weight.data.reshape(self.out_channels, -1)
        p = self.padding
        dx_pad = _col2im(dcols, n, c, h + 2 * p, w + 2 * p,
                         self.kernel, self.stride, oh, ow)
        if p:
            return dx_pad[:, :, p:p + h, p:p + w]
        return dx_pad


class MaxPool2d(Layer):
    """Max pooling; default window 3x3 (overlapping when stride < kernel)."""

    def __init__(self, kernel: int = 3, stride: int = 2):
        if kernel < 1 or stride < 1:
            raise InvalidConfig("pool parameters must be positive")
        self.kernel = kernel
        self.stride = stride
        self._cache = None

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h - self.kernel) // self.stride + 1
        ow = (w - self.kernel) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"pool output would be {oh}x{ow} for {h}x{w}")
        return oh, ow

    def forward(self, x, *, train=False, rng=None):
        n, c, h, w = x.shape
        k, s = self.kernel, self.stride
        oh, ow = self.out_hw(h, w)
        sn, sc, sh, sw = x.strides
        windows = np.lib.stride_tricks.as_strided(
            x,
            shape=(n, c, oh, ow, k, k),
            strides=(sn, sc, sh * s, sw * s, sh, sw),
            writeable=False,
        ).reshape(n, c, oh, ow, k * k)
        argmax = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
        self._cache = (argmax, (n, c, h, w), (oh, ow))
        return out

    def backward(self, dout):
        argmax, (n, c, h, w), (oh, ow) = self._cache
        k, s = self.kernel, self.stride
        dx = np.zeros((n, c, h * w), dtype=dout.dtype)
        rows = argmax // k + np.arange(oh)[None, None, :, None] * s
        cols = argmax % k + np.arange(ow)[None, None, None, :] * s
        flat = (rows * w + cols).reshape(n, c, -1)
        ni = np.arange(n)[:, None, None]
        ci = np.arange(c)[None, :, None]
        np.add.at(dx, (ni, ci, flat), dout.reshape(n, c, -1))
        return dx.reshape(n, c, h, w)


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, *, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0)


class Dropout(Layer):
    """Inverted-scaling dropout: train multiplies by mask/(1-p), inference
    is a pure pass-through."""

    def __init__(self, p: float = 0.5):
        if not 0.0 <= p < 1.0:
            raise InvalidConfig(f"dropout probability {p} not in [0, 1)")
        self.p = p
        self._mask = None

    def forward(self, x, *, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise InvalidConfig("train-mode dropout needs an rng")
        keep = 1.0 - self.p
        self._mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, dtype=np.float32):
        if in_features < 1 or out_features < 1:
            raise InvalidConfig("linear sizes must be positive")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor.zeros((in_features, out_features), dtype)
        self.bias = Tensor.zeros((out_features,), dtype)
        self._x = None

    def params(self):
        return {"w": self.weight, "b": self.bias}

    def forward(self, x, *, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(
                f"expected (N, {self.in_features}), got {x.shape}"
            )
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dout):
        self.weight.ensure_grad()[...] += self._x.T @ dout
        self.bias.ensure_grad()[...] += dout.sum(
            axis=0, dtype=np.float64
        ).astype(self.bias.dtype)
        return dout @ self.weight.data.T


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, *, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


def concat_forward(a: np.ndarray, b: np.ndarray, axis: int = 1) -> np.ndarray:
    if a.ndim != b.ndim:
        raise ShapeMismatch(f"rank mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=axis)


def concat_backward(dout: np.ndarray, split: int, axis: int = 1):
    idx_a = [slice(None)] * dout.ndim
    idx_b = [slice(None)] * dout.ndim
    idx_a[axis] = slice(0, split)
    idx_b[axis] = slice(split, None)
    return dout[tuple(idx_a)], dout[tuple(idx_b)]


# ---------------------------------------------------------------------------
# loss


def euclidean_loss(pred: np.ndarray, label: np.ndarray) -> tuple[float, np.ndarray]:
    """loss = sum ||pred_i - label_i||^2 / (2N); gradient = (pred - label)/N."""
    if pred.shape != label.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs label {label.shape}")
    n = pred.shape[0]
    diff = pred - label
    loss = float(np.sum(diff.astype(np.float64) ** 2) / (2.0 * n))
    return loss, diff / n


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class SgdConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    decay_factor: float = 0.1
    decay_interval: int = 10_000

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig(f"momentum {self.momentum} not in [0, 1)")
        if self.decay_interval < 1:
            raise InvalidConfig("decay_interval must be >= 1")

    def lr_at(self, iteration: int) -> float:
        return self.lr * self.decay_factor ** (iteration // self.decay_interval)


@dataclass
class SgdState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0


def sgd_step(params: dict[str, Tensor], state: SgdState, cfg: SgdConfig) -> None:
    """v <- momentum*v - lr*(g + weight_decay*w);  w <- w + v."""
    lr = cfg.lr_at(state.iteration)
    for name, p in params.items():
        if p.grad is None:
            raise MissingGrad(f"parameter {name} has no gradient")
        if p.grad.shape != p.data.shape:
            raise ShapeMismatch(f"grad shape {p.grad.shape} vs {p.data.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
            state.velocity[name] = v
        g = p.grad
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        v *= cfg.momentum
        v -= lr * g
        p.data += v
    state.iteration += 1
