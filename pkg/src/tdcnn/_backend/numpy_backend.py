"""Pure-numpy kernels, used when the compiled extension is not built.

matmul and conv2d_forward keep the strict ascending accumulation order (one
rounded multiply + add per term, vectorized over the non-contracted axes),
so they are bit-identical to the compiled kernels and to the naive loop
oracles. conv2d_backward has no exactness contract and uses BLAS-backed
contractions for speed; it is deterministic per install but reassociates
sums, so it matches the compiled backend only to ~1e-13 relative.
"""
import numpy as np

name = "numpy"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=a.dtype)
    for p in range(a.shape[1]):
        out += a[:, p : p + 1] * b[p : p + 1, :]
    return out


def matmul_rowinit(a: np.ndarray, b: np.ndarray, row_init: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[1]), dtype=a.dtype)
    out[:] = row_init[:, None]
    for p in range(a.shape[1]):
        out += a[:, p : p + 1] * b[p : p + 1, :]
    return out


def conv2d_forward(xpad: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size 3x3 convolution of a pre-padded batch.

    Shift-and-scale formulation: the accumulator starts at the bias and adds
    one kernel tap at a time in ascending (channel, row, col) order, exactly
    like the direct nested-loop form.
    """
    n, cin, hp, wp = xpad.shape
    h, wd = hp - 2, wp - 2
    y = np.empty((n, w.shape[0], h, wd), dtype=xpad.dtype)
    y[:] = bias[None, :, None, None]
    for c in range(cin):
        for u in range(3):
            for v in range(3):
                y += w[None, :, c, u, v, None, None] * xpad[:, None, c, u : u + h, v : v + wd]
    return y


def conv2d_backward(
    xpad: np.ndarray, w: np.ndarray, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. the padded input and the kernel weights."""
    n, cin, hp, wp = xpad.shape
    h, wd = hp - 2, wp - 2
    grad_w = np.empty_like(w)
    grad_xpad = np.zeros_like(xpad)
    for u in range(3):
        for v in range(3):
            xs = xpad[:, :, u : u + h, v : v + wd]
            grad_w[:, :, u, v] = np.tensordot(grad_y, xs, axes=([0, 2, 3], [0, 2, 3]))
            grad_xpad[:, :, u : u + h, v : v + wd] += np.tensordot(
                grad_y, w[:, :, u, v], axes=([1], [0])
            ).transpose(0, 3, 1, 2)
    return grad_xpad, grad_w
