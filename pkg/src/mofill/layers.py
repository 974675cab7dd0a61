"""Parameterized layer blocks, Xavier initialization and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import kernels as K


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {b}")


@dataclass
class LayerParams:
    """Trainable weight/bias pair plus its Adam moments."""

    name: str
    weight: np.ndarray
    bias: np.ndarray
    m_w: np.ndarray = field(default=None, repr=False)
    v_w: np.ndarray = field(default=None, repr=False)
    m_b: np.ndarray = field(default=None, repr=False)
    v_b: np.ndarray = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        for attr, ref in (("m_w", self.weight), ("v_w", self.weight), ("m_b", self.bias), ("v_b", self.bias)):
            if getattr(self, attr) is None:
                setattr(self, attr, np.zeros_like(ref))

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size

    def astype(self, dtype) -> "LayerParams":
        return LayerParams(self.name, self.weight.astype(dtype), self.bias.astype(dtype))


def fan_in_out(shape: Sequence[int]):
    if len(shape) < 2:
        raise ValueError(f"cannot derive fan-in/fan-out from shape {tuple(shape)}")
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    return shape[1] * receptive, shape[0] * receptive


def xavier_init(shape: Sequence[int], seed, dtype=K.TRAIN_DTYPE) -> np.ndarray:
    """Glorot-uniform samples in ``+-sqrt(6 / (fan_in + fan_out))``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    fan_in, fan_out = fan_in_out(shape)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(dtype)


def adam_step(params: LayerParams, grad_w: np.ndarray, grad_b: np.ndarray,
              config: OptimConfig) -> LayerParams:
    """One bias-corrected Adam update, applied in place."""
    if grad_w.shape != params.weight.shape or grad_b.shape != params.bias.shape:
        raise K.ShapeError(
            f"layer {params.name}: gradient shapes {grad_w.shape}/{grad_b.shape} do not match "
            f"parameters {params.weight.shape}/{params.bias.shape}"
        )
    if not (K.is_finite(grad_w) and K.is_finite(grad_b)):
        raise FloatingPointError(f"non-finite gradient in layer {params.name}")
    params.step += 1
    t = params.step
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in ((params.weight, grad_w, params.m_w, params.v_w),
                       (params.bias, grad_b, params.m_b, params.v_b)):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)).astype(p.dtype)
    return params


class Block:
    """A stack element. ``forward`` caches what ``backward`` needs."""

    params: Optional[LayerParams] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def clear(self) -> None:
        self._cache = None


class Conv2d(Block):
    def __init__(self, params: LayerParams, stride=1):
        self.params = params
        self.stride = stride
        self._cache = None
        self.grad_w = self.grad_b = None

    def forward(self, x, train=False):
        if not train:
            return K.conv2d_forward(x, self.params.weight, self.params.bias, self.stride)
        out, cols = K.conv2d_forward(x, self.params.weight, self.params.bias, self.stride, return_cols=True)
        self._cache = (x, cols)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError(f"{self.params.name}: backward called without a cached forward")
        x, cols = self._cache
        gx, self.grad_w, self.grad_b = K.conv2d_backward(grad, x, self.params.weight, self.stride, cols=cols)
        self._cache = None
        return gx


class ConvTranspose2d(Block):
    """Strided transposed conv; the output size is passed per call."""

    def __init__(self, params: LayerParams, stride=2):
        self.params = params
        self.stride = stride
        self._cache = None
        self.grad_w = self.grad_b = None

    def forward(self, x, target, train=False):
        if train:
            self._cache = x
        return K.convtranspose2d_forward(x, self.params.weight, self.params.bias, target, self.stride)

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError(f"{self.params.name}: backward called without a cached forward")
        gy, self.grad_w, self.grad_b = K.convtranspose2d_backward(grad, self._cache, self.params.weight, self.stride)
        self._cache = None
        return gy


class LeakyReLU(Block):
    def __init__(self, slope: float = 0.2):
        self.slope = slope
        self._cache = None

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return K.leaky_relu_forward(x, self.slope)

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError("leaky ReLU: backward called without a cached forward")
        g = K.leaky_relu_backward(grad, self._cache, self.slope)
        self._cache = None
        return g


class MaxPool2d(Block):
    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        out, idx = K.maxpool2d_forward(x)
        if train:
            self._cache = (idx, x.shape)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError("max-pool: backward called without a cached forward")
        idx, shape = self._cache
        self._cache = None
        return K.maxpool2d_backward(grad, idx, shape)


class Sequential(Block):
    """Plain forward chaining with reverse-order backward."""

    def __init__(self, blocks: Optional[List[Block]] = None):
        self.blocks = list(blocks or [])
        self._ran = False

    def forward(self, x, train=False):
        for b in self.blocks:
            x = b.forward(x, train=train)
        self._ran = train
        return x

    def backward(self, grad):
        if not self._ran:
            raise RuntimeError("Sequential.backward called without a cached forward")
        for b in reversed(self.blocks):
            grad = b.backward(grad)
        self._ran = False
        return grad

    def parameter_blocks(self):
        return [b for b in self.blocks if b.params is not None]
