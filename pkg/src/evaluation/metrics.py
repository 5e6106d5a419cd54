# src/evaluation/metrics.py

from __future__ import annotations

import math

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _pair(a, b, op: str):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b, "mse")
    diff = a - b
    return float(np.mean(diff * diff))


def psnr(a, b, peak: float = 1.0) -> float:
    """
    10 log10(peak^2 / mse); +inf for identical inputs.
    """
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return float(10.0 * math.log10(peak * peak / err))


def to_luma(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA_WEIGHTS
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")


def ssim(a, b, window: int = 8, peak: float = 1.0) -> float:
    """
    Mean SSIM over non-overlapping window x window blocks of the luma images.
    Trailing rows/columns that do not fill a whole block are ignored.
    """
    a, b = _pair(to_luma(a), to_luma(b), "ssim")
    h, w = a.shape
    if h < window or w < window:
        raise ValueError(f"ssim: image {w}x{h} smaller than the {window}x{window} window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    rows, cols = h // window, w // window

    def blocks(x: np.ndarray) -> np.ndarray:
        x = x[: rows * window, : cols * window]
        return x.reshape(rows, window, cols, window).transpose(0, 2, 1, 3).reshape(rows, cols, -1)

    xa, xb = blocks(a), blocks(b)
    mu_a = xa.mean(axis=-1)
    mu_b = xb.mean(axis=-1)
    da = xa - mu_a[..., None]
    db = xb - mu_b[..., None]
    var_a = np.mean(da * da, axis=-1)
    var_b = np.mean(db * db, axis=-1)
    cov = np.mean(da * db, axis=-1)

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
