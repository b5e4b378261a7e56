"""Image quality metrics."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import DimensionError

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # radius 5 -> 11x11 window at sigma 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref, peak=None) -> float:
    """PSNR in dB; ``math.inf`` when the images are identical."""
    x, ref = _pair(x, ref)
    peak = float(ref.max()) if peak is None else float(peak)
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim_map(x, ref, peak=None) -> np.ndarray:
    x, ref = _pair(x, ref)
    peak = float(ref.max()) if peak is None else float(peak)
    if peak <= 0:
        raise ValueError("peak must be positive")
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def blur(a):
        return gaussian_filter(a, SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")

    mx, my = blur(x), blur(ref)
    vx = blur(x * x) - mx * mx
    vy = blur(ref * ref) - my * my
    cxy = blur(x * ref) - mx * my
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(x, ref, peak=None) -> float:
    """Mean SSIM over 11x11 Gaussian windows (sigma 1.5), reflective borders.

    3-D inputs are treated as stacks of frames and averaged.
    """
    x, ref = _pair(x, ref)
    if x.ndim == 3:
        peak = float(ref.max()) if peak is None else peak
        return float(np.mean([ssim_map(a, b, peak).mean() for a, b in zip(x, ref)]))
    return float(ssim_map(x, ref, peak).mean())
