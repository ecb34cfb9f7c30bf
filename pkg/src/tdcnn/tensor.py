"""Dense array primitives: deterministic RNG, strict-order matmul, argmax.

Tensors are plain C-contiguous numpy arrays of float32 or float64; one
precision is chosen per model and used uniformly.
"""
from __future__ import annotations

import numpy as np

from . import _backend
from .errors import ShapeMismatchError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG53 = 2.0**-53


def _mix64(x: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 arithmetic wraps mod 2^64.
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


class SeededRng:
    """Counter-based deterministic generator over a SplitMix64 stream.

    All state transitions are unsigned 64-bit integer arithmetic, so the
    same seed replays the same stream on every platform. A generator is
    single-owner: draws advance the counter and are never shared between
    threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = 0

    def next_u64(self, count: int = 1) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        return _mix64(np.uint64(self.seed) + idx * _GOLDEN)

    def uniforms(self, count: int) -> np.ndarray:
        """float64 draws in (0, 1], dense enough for Box-Muller logs."""
        return ((self.next_u64(count) >> np.uint64(11)) + np.uint64(1)) * _TWO_NEG53

    def normals(self, count: int, mean: float = 0.0, stddev: float = 1.0) -> np.ndarray:
        if stddev < 0:
            raise ValueError(f"stddev must be nonnegative, got {stddev}")
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        ang = (2.0 * np.pi) * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(ang)
        z[1::2] = r * np.sin(ang)
        return mean + stddev * z[:count]

    def below(self, bound: int) -> int:
        """One integer in [0, bound); modulo bias is negligible at 64 bits."""
        return int(self.next_u64(1)[0] % np.uint64(bound))

    def shuffle(self, arr: np.ndarray) -> None:
        """In-place Fisher-Yates driven by the integer stream."""
        for i in range(len(arr) - 1, 0, -1):
            j = self.below(i + 1)
            arr[i], arr[j] = arr[j], arr[i]


def rng_normal(rng: SeededRng, n: int, mean: float, stddev: float) -> np.ndarray:
    """n pseudo-normal float64 draws via Box-Muller over the seeded stream."""
    return rng.normals(n, mean, stddev)


def _check_matmul_operand(x: np.ndarray, label: str) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeMismatchError(f"{label} must be rank-2, got shape {x.shape}")
    if x.dtype not in FLOAT_DTYPES:
        raise ShapeMismatchError(f"{label} must be float32/float64, got {x.dtype}")
    return np.ascontiguousarray(x)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """c[i, j] = sum_p a[i, p] * b[p, j], accumulated in ascending p order.

    The fixed order makes the result bit-identical to the naive triple loop
    regardless of backend.
    """
    a = _check_matmul_operand(a, "a")
    b = _check_matmul_operand(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeMismatchError(f"matmul dtypes differ: {a.dtype} vs {b.dtype}")
    return _backend.active.matmul(a, b)


def argmax_last(t: np.ndarray) -> list[int]:
    """Per-row index of the maximum; ties go to the lowest index."""
    if t.ndim != 2 or t.shape[1] < 1:
        raise ShapeMismatchError(f"argmax_last needs a nonempty rank-2 input, got {t.shape}")
    return [int(i) for i in np.argmax(t, axis=1)]


def one_hot(labels: np.ndarray, num_classes: int, dtype=np.float64) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out
