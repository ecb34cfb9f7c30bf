"""Image pipeline: grayscale, 3x3 median filter, high-pass edge enhancement,
bilinear resize, rotation/flip augmentation, and pixel normalization.

A GrayImage is a 2-D uint8 numpy array (row-major, values 0..255). Filter
borders use replicate padding so no artificial dark frame is introduced.
"""
from __future__ import annotations

import numpy as np

from .errors import DataFormatError, ShapeMismatchError


def check_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim != 2 or img.dtype != np.uint8 or img.size == 0:
        raise DataFormatError(f"expected a nonempty 2-D uint8 image, got {img.dtype} {img.shape}")
    return img


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma; single-channel input passes through unchanged."""
    if img.ndim == 2:
        return check_gray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataFormatError(f"expected 3 channels, got shape {img.shape}")
    rgb = img.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return np.clip(_round_half_up(luma), 0, 255).astype(np.uint8)


def _shifted_stack(padded: np.ndarray, h: int, w: int) -> np.ndarray:
    """[9, H, W] stack of the 3x3 neighborhood of every pixel."""
    return np.stack(
        [padded[u : u + h, v : v + w] for u in range(3) for v in range(3)], axis=0
    )


def median_filter_3x3(img: np.ndarray) -> np.ndarray:
    """Each pixel becomes the median of its 3x3 neighborhood (replicate-padded)."""
    img = check_gray(img)
    h, w = img.shape
    padded = np.pad(img, 1, mode="edge")
    return np.sort(_shifted_stack(padded, h, w), axis=0)[4]


def highpass_enhance(img: np.ndarray) -> np.ndarray:
    """Add a 4-neighbor Laplacian edge map back onto the image, saturating."""
    img = check_gray(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ShapeMismatchError(f"image {img.shape} is smaller than the 3x3 kernel")
    s = np.pad(img.astype(np.int32), 1, mode="edge")
    center = s[1:-1, 1:-1]
    edges = 4 * center - s[:-2, 1:-1] - s[2:, 1:-1] - s[1:-1, :-2] - s[1:-1, 2:]
    return np.clip(center + edges, 0, 255).astype(np.uint8)


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned continuous coordinates."""
    img = check_gray(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    h, w = img.shape
    src_y = np.arange(out_h) * ((h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    src_x = np.arange(out_w) * ((w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    y0 = np.minimum(src_y.astype(np.int64), h - 1)
    x0 = np.minimum(src_x.astype(np.int64), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (src_y - y0)[:, None]
    fx = (src_x - x0)[None, :]
    pix = img.astype(np.float64)
    val = (
        pix[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + pix[np.ix_(y0, x1)] * (1 - fy) * fx
        + pix[np.ix_(y1, x0)] * fy * (1 - fx)
        + pix[np.ix_(y1, x1)] * fy * fx
    )
    return np.clip(_round_half_up(val), 0, 255).astype(np.uint8)


def augment(img: np.ndarray) -> list[np.ndarray]:
    """[original, rot90, rot180, rot270, horizontal flip].

    Rotations are counterclockwise pixel permutations; the flip mirrors
    columns. Rotating a non-square image transposes its extents.
    """
    img = check_gray(img)
    return [
        img.copy(),
        np.ascontiguousarray(np.rot90(img, 1)),
        np.ascontiguousarray(np.rot90(img, 2)),
        np.ascontiguousarray(np.rot90(img, 3)),
        np.ascontiguousarray(np.fliplr(img)),
    ]


def normalize(img: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Pixels scaled to [0, 1] as a [1, H, W] tensor of the model precision."""
    img = check_gray(img)
    return (img.astype(dtype) / dtype(255))[None, :, :]


def pipeline(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """median -> high-pass enhance -> resize; grayscale conversion happens at
    load time and normalization at batch time."""
    return resize(highpass_enhance(median_filter_3x3(img)), out_h, out_w)
