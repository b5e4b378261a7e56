"""MTF from reconstructed square-wave bar targets.

For each frequency the vertical bar target is captured and reconstructed,
the central half of the frame (both axes) is averaged down each column, and
the Michelson contrast of that profile is divided by the same contrast of
the ideal target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import io
from ..errors import ConfigError
from ..model import GeometryConfig, OpticsConfig
from ..patterns import pixel_scan_length
from ..recon import SolverConfig
from .rates import compression_factor
from .scenes import bars
from .sweeps import derive_seed, run_point

MTF_CEILING = 1.05


@dataclass
class MtfCurve:
    frequencies: np.ndarray
    mtf: np.ndarray
    alpha: float
    T: int

    def to_csv(self, path) -> None:
        io.write_csv(path, ["frequency", "mtf", "alpha"],
                     [[float(f), float(m), float(self.alpha)] for f, m in zip(self.frequencies, self.mtf)])


def michelson(image: np.ndarray) -> float:
    """Contrast of the column-mean profile over the central 50% region."""
    rows, cols = image.shape
    r0, c0 = rows // 4, cols // 4
    profile = image[r0:rows - r0, c0:cols - c0].mean(axis=0)
    hi, lo = float(profile.max()), float(profile.min())
    if hi + lo <= 0:
        return 0.0
    return (hi - lo) / (hi + lo)


def mtf_curve(geometry: GeometryConfig, optics: OpticsConfig | None, pattern_kind: str, T: int,
              frequencies, solver_cfg: SolverConfig | None = None, seeds=(0,),
              snr_db: float | None = None, density: float = 0.5) -> MtfCurve:
    """Median over ``seeds`` of the normalized contrast at each frequency."""
    solver_cfg = solver_cfg or SolverConfig()
    freqs = np.asarray(frequencies, dtype=np.float64)
    values = np.empty((freqs.size, len(seeds)))
    for i, f in enumerate(freqs):
        if not 0 < f <= 0.5:
            raise ConfigError(f"MTF frequencies must lie in (0, 0.5], got {f}")
        target = bars(geometry, f)
        ref = michelson(target)
        if ref == 0:
            raise ConfigError(f"bar target at f={f} has no contrast in the central region")
        for j, base in enumerate(seeds):
            est = run_point(target, geometry, optics, pattern_kind, T, snr_db, derive_seed(base, 0),
                            derive_seed(derive_seed(base, i), 1), solver_cfg, density)
            values[i, j] = michelson(est) / ref
    mtf = np.clip(np.median(values, axis=1), 0.0, MTF_CEILING)
    if T is None:
        T = pixel_scan_length(geometry.dmd_rows, geometry.dmd_cols, *geometry.sensor_shape)
    alpha = compression_factor(geometry.n_dmd, T, geometry.n_sensor)
    return MtfCurve(freqs, mtf, alpha, int(T))
