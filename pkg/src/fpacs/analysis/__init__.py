"""Evaluation tools: rate arithmetic, quality metrics, sweeps, MTF, scenes and filters."""
from .filters import median_filter_3d
from .metrics import psnr, ssim, ssim_map
from .mtf import MtfCurve, mtf_curve
from .rates import RateReport, compression_factor, rate_report
from .scenes import make_chart, make_moving_scene
from .sweeps import SweepResult, compression_sweep, derive_seed, noise_sweep

__all__ = [
    "MtfCurve", "RateReport", "SweepResult", "compression_factor", "compression_sweep",
    "derive_seed", "make_chart", "make_moving_scene", "median_filter_3d", "mtf_curve",
    "noise_sweep", "psnr", "rate_report", "ssim", "ssim_map",
]
