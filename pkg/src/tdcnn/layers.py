"""Forward/backward passes for every layer type in the network.

All ops are pure functions of their inputs plus an explicit cache object;
parameter tensors are never mutated here. Convolution is 3x3, stride 1,
"same" zero padding; pooling is 2x2 stride 2 with floor on odd extents.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import ShapeMismatchError


@dataclass
class Conv2DLayer:
    name: str
    weights: np.ndarray  # [out_ch, in_ch, 3, 3]
    bias: np.ndarray  # [out_ch]

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[2:] != (3, 3):
            raise ShapeMismatchError(
                f"conv weights must be [out, in, 3, 3], got {self.weights.shape}"
            )


@dataclass
class DenseLayer:
    name: str
    weights: np.ndarray  # [in, out]
    bias: np.ndarray  # [out]

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeMismatchError(
                f"dense weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )


@dataclass
class MaxPool2DLayer:
    name: str = "maxpool"


@dataclass
class ReLULayer:
    name: str = "relu"


@dataclass
class FlattenLayer:
    name: str = "flatten"


@dataclass
class ConvCache:
    layer: Conv2DLayer
    xpad: np.ndarray
    x_shape: tuple
    y_shape: tuple


@dataclass
class PoolCache:
    x_shape: tuple
    y_shape: tuple
    argmax: np.ndarray  # [N, C, Ho, Wo] in 0..3, row-major within each window


@dataclass
class DenseCache:
    layer: DenseLayer
    x: np.ndarray
    y_shape: tuple


@dataclass
class ReluCache:
    mask: np.ndarray  # x > 0; the subgradient at exactly 0 is 0


@dataclass
class FlattenCache:
    x_shape: tuple


def conv2d_forward(x: np.ndarray, layer: Conv2DLayer) -> tuple[np.ndarray, ConvCache]:
    if x.ndim != 4:
        raise ShapeMismatchError(f"conv input must be [N, C, H, W], got {x.shape}")
    if x.shape[1] != layer.weights.shape[1]:
        raise ShapeMismatchError(
            f"{layer.name}: input channels {x.shape[1]} != kernel channels "
            f"{layer.weights.shape[1]} (input {x.shape}, weights {layer.weights.shape})"
        )
    xpad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    y = _backend.active.conv2d_forward(xpad, layer.weights, layer.bias)
    return y, ConvCache(layer, xpad, x.shape, y.shape)


def conv2d_backward(
    grad_y: np.ndarray, cache: ConvCache
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if grad_y.shape != cache.y_shape:
        raise ShapeMismatchError(
            f"{cache.layer.name}: grad shape {grad_y.shape} does not match the "
            f"cached forward output {cache.y_shape}"
        )
    grad_b = grad_y.sum(axis=(0, 2, 3))
    grad_xpad, grad_w = _backend.active.conv2d_backward(
        cache.xpad, cache.layer.weights, np.ascontiguousarray(grad_y)
    )
    grad_x = np.ascontiguousarray(grad_xpad[:, :, 1:-1, 1:-1])
    return grad_x, grad_w, grad_b


def _pool_windows(x: np.ndarray) -> np.ndarray:
    """[N, C, Ho, Wo, 4] with window elements in row-major scan order."""
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    cropped = x[:, :, : 2 * ho, : 2 * wo]
    return (
        cropped.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    )


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, PoolCache]:
    if x.ndim != 4:
        raise ShapeMismatchError(f"pool input must be [N, C, H, W], got {x.shape}")
    if x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeMismatchError(f"pooling {x.shape} would give an empty output")
    win = _pool_windows(x)
    arg = np.argmax(win, axis=4)  # first maximum in scan order on ties
    y = np.take_along_axis(win, arg[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), PoolCache(x.shape, y.shape, arg)


def maxpool_backward(grad_y: np.ndarray, cache: PoolCache) -> np.ndarray:
    if grad_y.shape != cache.y_shape:
        raise ShapeMismatchError(
            f"pool grad shape {grad_y.shape} does not match forward output {cache.y_shape}"
        )
    n, c, h, w = cache.x_shape
    ho, wo = h // 2, w // 2
    flat = np.zeros((n, c, ho, wo, 4), dtype=grad_y.dtype)
    np.put_along_axis(flat, cache.argmax[..., None], grad_y[..., None], axis=4)
    grad_cropped = (
        flat.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    )
    if (2 * ho, 2 * wo) == (h, w):
        return np.ascontiguousarray(grad_cropped)
    grad_x = np.zeros(cache.x_shape, dtype=grad_y.dtype)
    grad_x[:, :, : 2 * ho, : 2 * wo] = grad_cropped
    return grad_x


def dense_forward(x: np.ndarray, layer: DenseLayer) -> tuple[np.ndarray, DenseCache]:
    if x.ndim != 2 or x.shape[1] != layer.weights.shape[0]:
        raise ShapeMismatchError(
            f"{layer.name}: input {x.shape} does not match weights {layer.weights.shape}"
        )
    y = _backend.active.matmul(np.ascontiguousarray(x), layer.weights) + layer.bias
    return y, DenseCache(layer, x, y.shape)


def dense_backward(
    grad_y: np.ndarray, cache: DenseCache
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if grad_y.shape != cache.y_shape:
        raise ShapeMismatchError(
            f"{cache.layer.name}: grad shape {grad_y.shape} does not match output "
            f"{cache.y_shape}"
        )
    grad_y = np.ascontiguousarray(grad_y)
    w = cache.layer.weights
    grad_x = _backend.active.matmul(grad_y, np.ascontiguousarray(w.T))
    grad_w = _backend.active.matmul(np.ascontiguousarray(cache.x.T), grad_y)
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> tuple[np.ndarray, ReluCache]:
    return np.maximum(x, 0), ReluCache(x > 0)


def relu_backward(grad_y: np.ndarray, cache: ReluCache) -> np.ndarray:
    return grad_y * cache.mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    if logits.ndim != 2 or logits.shape[1] < 1:
        raise ShapeMismatchError(f"softmax needs a nonempty rank-2 input, got {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def flatten(x: np.ndarray) -> tuple[np.ndarray, FlattenCache]:
    if x.ndim != 4:
        raise ShapeMismatchError(f"flatten input must be rank-4, got {x.shape}")
    return np.ascontiguousarray(x).reshape(x.shape[0], -1), FlattenCache(x.shape)


def flatten_backward(grad_y: np.ndarray, cache: FlattenCache) -> np.ndarray:
    return np.ascontiguousarray(grad_y).reshape(cache.x_shape)
