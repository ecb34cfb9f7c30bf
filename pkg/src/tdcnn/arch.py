"""Model specification and materialization.

The backbone is fixed: five (conv3x3 -> ReLU -> maxpool2x2) stages, flatten,
a configurable fully connected stack (triangular / rectangular /
recto-triangular width schedules, or an explicit list), a 64-wide ReLU dense
layer, and a 2-class softmax output.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CheckpointError, NumericInstabilityError, ShapeMismatchError
from .layers import (
    Conv2DLayer,
    DenseLayer,
    FlattenLayer,
    MaxPool2DLayer,
    ReLULayer,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    flatten,
    flatten_backward,
    maxpool_backward,
    maxpool_forward,
    relu,
    relu_backward,
    softmax,
)
from .tensor import SeededRng, rng_normal

CHECKPOINT_MAGIC = b"TDCNNCK1"
CHECKPOINT_VERSION = 1


class HiddenArch(str, Enum):
    TRIANGULAR = "triangular"
    RECTANGULAR = "rectangular"
    RECTO_TRIANGULAR = "recto_triangular"


_HIDDEN_SIZES = {
    HiddenArch.TRIANGULAR: (256, 512, 256, 128, 64, 32, 16),
    HiddenArch.RECTANGULAR: (256, 256, 256, 256, 256, 256),
    HiddenArch.RECTO_TRIANGULAR: (512, 256, 128, 128, 256, 512),
}


def hidden_sizes(arch: HiddenArch) -> list[int]:
    """Per-layer widths of the named fully connected stack."""
    return list(_HIDDEN_SIZES[HiddenArch(arch)])


@dataclass(frozen=True)
class ModelSpec:
    input_size: tuple[int, int] = (300, 300)
    conv_filters: tuple[int, ...] = (16, 32, 64, 64, 128)
    hidden: HiddenArch | tuple[int, ...] = HiddenArch.RECTO_TRIANGULAR
    head_width: int = 64
    num_classes: int = 2
    dtype_name: str = "float32"

    def __post_init__(self):
        if len(self.conv_filters) != 5 or any(f < 1 for f in self.conv_filters):
            raise ValueError(f"exactly 5 positive conv filter counts required: {self.conv_filters}")
        if self.dtype_name not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.dtype_name!r}")
        if self.head_width < 1 or self.num_classes < 2:
            raise ValueError("head width must be >= 1 and class count >= 2")
        h, w = self.input_size
        for stage in range(1, 6):
            if h < 2 or w < 2:
                raise ValueError(
                    f"input {self.input_size} is too small: pooling stage {stage} would "
                    f"see a {h}x{w} map"
                )
            h, w = h // 2, w // 2

    @property
    def dtype(self):
        return np.float32 if self.dtype_name == "float32" else np.float64

    def hidden_widths(self) -> list[int]:
        if isinstance(self.hidden, HiddenArch):
            return hidden_sizes(self.hidden)
        return list(self.hidden)

    def spatial_schedule(self) -> list[tuple[int, int]]:
        """Feature map sizes after each pooling stage (floor halving)."""
        h, w = self.input_size
        out = []
        for _ in range(5):
            h, w = h // 2, w // 2
            out.append((h, w))
        return out

    def flat_width(self) -> int:
        h5, w5 = self.spatial_schedule()[-1]
        return self.conv_filters[-1] * h5 * w5


@dataclass
class Model:
    spec: ModelSpec
    layers: list
    seed: int

    def parameters(self) -> dict[str, np.ndarray]:
        """Name -> tensor in a fixed, deterministic order."""
        out = {}
        for layer in self.layers:
            if isinstance(layer, (Conv2DLayer, DenseLayer)):
                out[f"{layer.name}.weights"] = layer.weights
                out[f"{layer.name}.bias"] = layer.bias
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters().values())


def param_count(model: Model) -> int:
    return model.param_count()


def _he_dense(rng: SeededRng, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    scale = math.sqrt(2.0 / fan_in)
    return rng_normal(rng, fan_in * fan_out, 0.0, scale).reshape(fan_in, fan_out).astype(dtype)


def build_model(spec: ModelSpec, rng: SeededRng) -> Model:
    """Materialize parameters: He-initialized weights, zero biases.

    Identical seeds give bit-identical parameters; draws happen in layer
    order, weights before biases.
    """
    dtype = spec.dtype
    layers: list = []
    cin = 1
    for idx, cout in enumerate(spec.conv_filters):
        fan_in = cin * 9
        w = (
            rng_normal(rng, cout * fan_in, 0.0, math.sqrt(2.0 / fan_in))
            .reshape(cout, cin, 3, 3)
            .astype(dtype)
        )
        layers.append(Conv2DLayer(f"conv{idx + 1}", w, np.zeros(cout, dtype=dtype)))
        layers.append(ReLULayer())
        layers.append(MaxPool2DLayer())
        cin = cout
    layers.append(FlattenLayer())
    width = spec.flat_width()
    for idx, hidden_width in enumerate(spec.hidden_widths()):
        layers.append(
            DenseLayer(
                f"hidden{idx + 1}",
                _he_dense(rng, width, hidden_width, dtype),
                np.zeros(hidden_width, dtype=dtype),
            )
        )
        layers.append(ReLULayer())
        width = hidden_width
    layers.append(
        DenseLayer("head", _he_dense(rng, width, spec.head_width, dtype),
                   np.zeros(spec.head_width, dtype=dtype))
    )
    layers.append(ReLULayer())
    layers.append(
        DenseLayer("output", _he_dense(rng, spec.head_width, spec.num_classes, dtype),
                   np.zeros(spec.num_classes, dtype=dtype))
    )
    return Model(spec, layers, rng.seed)


def model_forward(
    model: Model, batch: np.ndarray, train_mode: bool = False
) -> tuple[np.ndarray, list | None]:
    """Run the whole network; returns softmax probabilities and, in train
    mode, the per-layer caches the backward pass needs."""
    spec = model.spec
    if batch.ndim != 4 or batch.shape[1] != 1 or batch.shape[2:] != spec.input_size:
        raise ShapeMismatchError(
            f"batch {batch.shape} does not match the model input [N, 1, "
            f"{spec.input_size[0]}, {spec.input_size[1]}]"
        )
    h = np.ascontiguousarray(batch.astype(spec.dtype, copy=False))
    caches = []
    for layer in model.layers:
        if isinstance(layer, Conv2DLayer):
            h, cache = conv2d_forward(h, layer)
        elif isinstance(layer, ReLULayer):
            h, cache = relu(h)
        elif isinstance(layer, MaxPool2DLayer):
            h, cache = maxpool_forward(h)
        elif isinstance(layer, FlattenLayer):
            h, cache = flatten(h)
        else:
            h, cache = dense_forward(h, layer)
        if train_mode:
            caches.append(cache)
    probs = softmax(h)
    if not np.all(np.isfinite(probs)):
        raise NumericInstabilityError("forward pass produced non-finite probabilities")
    return probs, (caches if train_mode else None)


def model_backward(model: Model, caches: list | None, grad_logits: np.ndarray) -> dict:
    """Exact reverse-mode gradients for every parameter tensor.

    grad_logits is the loss gradient at the pre-softmax output (the loss is
    fused with the softmax), so the chain starts at the last dense layer.
    """
    if caches is None:
        raise ValueError("backward needs the caches from a train-mode forward pass")
    if len(caches) != len(model.layers):
        raise ValueError(f"expected {len(model.layers)} caches, got {len(caches)}")
    grads: dict[str, np.ndarray] = {}
    g = grad_logits
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        if isinstance(layer, Conv2DLayer):
            g, gw, gb = conv2d_backward(g, cache)
            grads[f"{layer.name}.weights"] = gw
            grads[f"{layer.name}.bias"] = gb
        elif isinstance(layer, ReLULayer):
            g = relu_backward(g, cache)
        elif isinstance(layer, MaxPool2DLayer):
            g = maxpool_backward(g, cache)
        elif isinstance(layer, FlattenLayer):
            g = flatten_backward(g, cache)
        else:
            g, gw, gb = dense_backward(g, cache)
            grads[f"{layer.name}.weights"] = gw
            grads[f"{layer.name}.bias"] = gb
    return {name: grads[name] for name in model.parameters()}


def _spec_lines(spec: ModelSpec) -> bytes:
    hidden = (
        spec.hidden.value
        if isinstance(spec.hidden, HiddenArch)
        else "custom:" + ",".join(str(w) for w in spec.hidden)
    )
    lines = [
        f"input_h={spec.input_size[0]}",
        f"input_w={spec.input_size[1]}",
        "conv_filters=" + ",".join(str(f) for f in spec.conv_filters),
        f"hidden={hidden}",
        f"head_width={spec.head_width}",
        f"num_classes={spec.num_classes}",
        f"dtype={spec.dtype_name}",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _spec_from_lines(blob: bytes) -> ModelSpec:
    fields = {}
    for line in blob.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            fields[key] = value
    try:
        hidden_txt = fields["hidden"]
        hidden: HiddenArch | tuple[int, ...]
        if hidden_txt.startswith("custom:"):
            hidden = tuple(int(w) for w in hidden_txt[len("custom:") :].split(","))
        else:
            hidden = HiddenArch(hidden_txt)
        return ModelSpec(
            input_size=(int(fields["input_h"]), int(fields["input_w"])),
            conv_filters=tuple(int(f) for f in fields["conv_filters"].split(",")),
            hidden=hidden,
            head_width=int(fields["head_width"]),
            num_classes=int(fields["num_classes"]),
            dtype_name=fields["dtype"],
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint metadata: {exc}") from exc


def save_checkpoint(model: Model, path) -> None:
    """Binary format: magic, version byte, length-prefixed key=value metadata,
    seed, then each parameter as (name, rank, extents, float32 LE payload)."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<B", CHECKPOINT_VERSION))
    blob = _spec_lines(model.spec)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<Q", model.seed))
    for name, tensor in model.parameters().items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", tensor.ndim))
        for extent in tensor.shape:
            buf.write(struct.pack("<I", extent))
        buf.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


class _ZeroStream:
    """Stands in for SeededRng when every parameter will be overwritten."""

    seed = 0

    @staticmethod
    def normals(count, mean=0.0, stddev=1.0):
        return np.zeros(count)


def _materialize(spec: ModelSpec, seed: int) -> Model:
    model = build_model(spec, _ZeroStream())  # type: ignore[arg-type]
    model.seed = seed
    return model


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, "magic") != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic: {path} is not a checkpoint file")
        (version,) = struct.unpack("<B", _read_exact(fh, 1, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        spec = _spec_from_lines(_read_exact(fh, blob_len, "metadata"))
        (seed,) = struct.unpack("<Q", _read_exact(fh, 8, "seed"))
        model = _materialize(spec, seed)
        for name, tensor in model.parameters().items():
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "parameter name length"))
            stored = _read_exact(fh, name_len, "parameter name").decode("utf-8")
            if stored != name:
                raise CheckpointError(f"parameter order mismatch: expected {name}, got {stored}")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "rank"))
            extents = struct.unpack(
                f"<{rank}I", _read_exact(fh, 4 * rank, f"extents of {name}")
            )
            if tuple(extents) != tensor.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: file has {extents}, spec needs {tensor.shape}"
                )
            payload = _read_exact(fh, 4 * tensor.size, f"payload of {name}")
            values = np.frombuffer(payload, dtype="<f4").reshape(extents)
            tensor[...] = values.astype(spec.dtype)
        if fh.read(1):
            raise CheckpointError("trailing bytes after the last parameter")
    return model
