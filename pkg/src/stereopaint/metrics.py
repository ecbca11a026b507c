"""Image quality metrics: PSNR and single-scale SSIM, computed in float64."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor

PSNR_CAP = 100.0


def _as_array(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    return arr.astype(np.float64)


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for images in [0,1]; identical inputs cap at 100 dB."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ShapeError(f"psnr: shapes {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def _windowed_mean(img: np.ndarray) -> np.ndarray:
    # valid-mode 11x11 Gaussian filtering
    win = np.lib.stride_tricks.sliding_window_view(img, (11, 11))
    return np.tensordot(win, _WINDOW, axes=([2, 3], [0, 1]))


def ssim(a, b) -> float:
    """Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
    dynamic range 1.0; mean over valid window positions and channels."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ShapeError(f"ssim: shapes {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise ShapeError(f"ssim: expected [C,H,W] or [H,W], got {x.shape}")
    h, w = x.shape[-2:]
    if h < 11 or w < 11:
        raise ShapeError(f"ssim: needs H, W >= 11, got {h}x{w}")
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2
    vals = []
    for cx, cy in zip(x, y):
        mx = _windowed_mean(cx)
        my = _windowed_mean(cy)
        mxx = _windowed_mean(cx * cx)
        myy = _windowed_mean(cy * cy)
        mxy = _windowed_mean(cx * cy)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(num / den)
    return float(np.mean(vals))
