"""Central finite-difference checks for every layer backward pass and for a
tiny end-to-end model. This is the verification surrogate the CLI exposes.

All checks run in float64. The step is h = 1e-5 * max(1, |x|) per coordinate
and the reported number is max|analytic - numeric| / max(||analytic||_inf,
||numeric||_inf, 1e-12).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .arch import ModelSpec, build_model, model_backward, model_forward
from .losses import FocalLossConfig, focal_loss
from .tensor import SeededRng

LAYER_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def fd_gradient(f, x: np.ndarray) -> np.ndarray:
    """Per-coordinate central differences of a scalar function."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        h = 1e-5 * max(1.0, abs(flat[i]))
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _spread_values(rng: SeededRng, shape) -> np.ndarray:
    """Well-separated values (a shuffled ramp), so max-pool argmaxes cannot
    flip under the finite-difference step."""
    n = int(np.prod(shape))
    vals = np.linspace(-1.0, 1.0, n)
    order = np.arange(n)
    rng.shuffle(order)
    return vals[order].reshape(shape)


def _projection_loss(y: np.ndarray, r: np.ndarray) -> float:
    return float(np.sum(y * r))


def check_conv2d(rng: SeededRng, perturb: bool = False) -> CheckResult:
    x = rng.normals(2 * 2 * 5 * 5).reshape(2, 2, 5, 5)
    layer = L.Conv2DLayer(
        "conv", rng.normals(3 * 2 * 9).reshape(3, 2, 3, 3), rng.normals(3)
    )
    y, cache = L.conv2d_forward(x, layer)
    r = rng.normals(y.size).reshape(y.shape)
    gx, gw, gb = L.conv2d_backward(r, cache)
    if perturb:
        gw = gw * 1.001  # deliberate corruption hook for the self-test
    err = 0.0
    err = max(err, relative_error(gx, fd_gradient(
        lambda t: _projection_loss(L.conv2d_forward(t, layer)[0], r), x)))
    err = max(err, relative_error(gw, fd_gradient(
        lambda t: _projection_loss(
            L.conv2d_forward(x, L.Conv2DLayer("conv", t, layer.bias))[0], r), layer.weights)))
    err = max(err, relative_error(gb, fd_gradient(
        lambda t: _projection_loss(
            L.conv2d_forward(x, L.Conv2DLayer("conv", layer.weights, t))[0], r), layer.bias)))
    return CheckResult("conv2d", err, LAYER_TOLERANCE)


def check_maxpool(rng: SeededRng) -> CheckResult:
    x = _spread_values(rng, (2, 3, 6, 6))
    y, cache = L.maxpool_forward(x)
    r = rng.normals(y.size).reshape(y.shape)
    gx = L.maxpool_backward(r, cache)
    numeric = fd_gradient(lambda t: _projection_loss(L.maxpool_forward(t)[0], r), x)
    return CheckResult("maxpool", relative_error(gx, numeric), LAYER_TOLERANCE)


def check_dense(rng: SeededRng) -> CheckResult:
    x = rng.normals(3 * 4).reshape(3, 4)
    layer = L.DenseLayer("dense", rng.normals(4 * 2).reshape(4, 2), rng.normals(2))
    y, cache = L.dense_forward(x, layer)
    r = rng.normals(y.size).reshape(y.shape)
    gx, gw, gb = L.dense_backward(r, cache)
    err = max(
        relative_error(gx, fd_gradient(
            lambda t: _projection_loss(L.dense_forward(t, layer)[0], r), x)),
        relative_error(gw, fd_gradient(
            lambda t: _projection_loss(
                L.dense_forward(x, L.DenseLayer("dense", t, layer.bias))[0], r),
            layer.weights)),
        relative_error(gb, fd_gradient(
            lambda t: _projection_loss(
                L.dense_forward(x, L.DenseLayer("dense", layer.weights, t))[0], r),
            layer.bias)),
    )
    return CheckResult("dense", err, LAYER_TOLERANCE)


def check_relu(rng: SeededRng) -> CheckResult:
    x = rng.normals(40).reshape(5, 8)
    x += 0.2 * np.sign(x)  # keep inputs away from the kink at 0
    x = x.reshape(1, 5, 8, 1)
    y, cache = L.relu(x)
    r = rng.normals(y.size).reshape(y.shape)
    gx = L.relu_backward(r, cache)
    numeric = fd_gradient(lambda t: _projection_loss(L.relu(t)[0], r), x)
    return CheckResult("relu", relative_error(gx, numeric), LAYER_TOLERANCE)


def check_softmax_focal(rng: SeededRng) -> CheckResult:
    logits = rng.normals(4 * 2).reshape(4, 2)
    targets = np.zeros((4, 2))
    targets[np.arange(4), [0, 1, 1, 0]] = 1.0
    cfg = FocalLossConfig(gamma=2.0)
    _, grad = focal_loss(L.softmax(logits), targets, cfg)
    numeric = fd_gradient(lambda z: focal_loss(L.softmax(z), targets, cfg)[0], logits)
    return CheckResult("softmax+focal", relative_error(grad, numeric), LAYER_TOLERANCE)


def tiny_model_spec() -> ModelSpec:
    """Smallest legal five-stage configuration (32x32 survives five floor
    halvings; anything smaller reaches an empty pooling output)."""
    return ModelSpec(
        input_size=(32, 32),
        conv_filters=(2, 2, 2, 2, 2),
        hidden=(4,),
        head_width=4,
        dtype_name="float64",
    )


def check_full_model(rng: SeededRng, sample_params: int = 20) -> CheckResult:
    spec = tiny_model_spec()
    model = build_model(spec, SeededRng(rng.below(1 << 32)))
    x = rng.uniforms(2 * 32 * 32).reshape(2, 1, 32, 32)
    targets = np.zeros((2, 2))
    targets[[0, 1], [0, 1]] = 1.0
    cfg = FocalLossConfig(gamma=2.0)

    def loss_value() -> float:
        probs, _ = model_forward(model, x)
        return focal_loss(probs, targets, cfg)[0]

    probs, caches = model_forward(model, x, train_mode=True)
    _, grad_logits = focal_loss(probs, targets, cfg)
    grads = model_backward(model, caches, grad_logits)

    params = model.parameters()
    names = list(params)
    err = 0.0
    for _ in range(sample_params):
        name = names[rng.below(len(names))]
        tensor = params[name].reshape(-1)
        i = rng.below(tensor.size)
        h = 1e-5 * max(1.0, abs(tensor[i]))
        orig = tensor[i]
        tensor[i] = orig + h
        hi = loss_value()
        tensor[i] = orig - h
        lo = loss_value()
        tensor[i] = orig
        numeric = (hi - lo) / (2.0 * h)
        analytic = grads[name].reshape(-1)[i]
        denom = max(abs(analytic), abs(numeric), 1e-6)
        err = max(err, abs(analytic - numeric) / denom)
    return CheckResult("full-model", err, MODEL_TOLERANCE)


def run_all(seed: int = 2024, perturb: str | None = None) -> list[CheckResult]:
    """One result per layer type plus the tiny full model.

    perturb="conv" corrupts the convolution gradient on purpose so the
    harness can prove it detects injected bugs.
    """
    rng = SeededRng(seed)
    return [
        check_conv2d(rng, perturb == "conv"),
        check_maxpool(rng),
        check_dense(rng),
        check_relu(rng),
        check_softmax_focal(rng),
        check_full_model(rng),
    ]
