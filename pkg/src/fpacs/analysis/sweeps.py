"""Compression and noise sweeps.

Point ``k`` under base seed ``s`` draws its noise from
``derive_seed(derive_seed(s, k), 1)``, so points are independent and any one
of them can be rerun alone.  Patterns come from ``derive_seed(s, 0)`` at every
point: random-binary sequences drawn from one seed are nested in ``T``, so
neighbouring points differ only in the quantity being swept.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .. import io
from ..model import GeometryConfig, NoiseSpec, OpticsConfig, build_map, simulate_capture, stack
from ..patterns import make_sequence
from ..recon import SolverConfig, TvKind, solve
from .metrics import psnr, ssim


def derive_seed(base: int, index: int) -> int:
    """BLAKE2b of ``base XOR index`` (as u64), truncated to 63 bits."""
    word = (int(base) ^ int(index)) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(word.to_bytes(8, "little"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class SweepResult:
    axis_name: str
    axis_values: list
    psnr_db: np.ndarray       # per-point median over seeds
    ssim: np.ndarray
    psnr_per_seed: np.ndarray  # (points, seeds)
    ssim_per_seed: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.axis_values)
        if not (len(self.psnr_db) == len(self.ssim) == n):
            raise ValueError("sweep arrays must match the axis length")

    def to_csv(self, path) -> None:
        n_seeds = self.psnr_per_seed.shape[1]
        header = [self.axis_name, "psnr_db", "ssim"]
        header += [f"psnr_db_seed{k}" for k in range(n_seeds)]
        header += [f"ssim_seed{k}" for k in range(n_seeds)]
        rows = []
        for i, v in enumerate(self.axis_values):
            rows.append([_axis_str(v), float(self.psnr_db[i]), float(self.ssim[i]),
                         *map(float, self.psnr_per_seed[i]), *map(float, self.ssim_per_seed[i])])
        io.write_csv(path, header, rows)


def _axis_str(v):
    return "none" if v is None else v


def run_point(scene, geometry: GeometryConfig, optics: OpticsConfig | None, pattern_kind: str,
              T: int | None, snr_db: float | None, pattern_seed: int, noise_seed: int,
              solver_cfg: SolverConfig, density: float = 0.5, groups=None) -> np.ndarray:
    """Capture ``scene`` and reconstruct it; returns the estimate."""
    smap = build_map(geometry, optics)
    seq = make_sequence(pattern_kind, geometry, T, density=density, seed=pattern_seed, groups=groups)
    noise = NoiseSpec(snr_db, noise_seed)
    y = simulate_capture(smap, seq, scene, noise)
    system = stack(smap, seq, y, geometry)
    return solve(system, TvKind.TV2D, solver_cfg).estimate


def _sweep(name, values, point_args, scene, geometry, optics, pattern_kind, solver_cfg, seeds, density):
    scene = np.asarray(scene, dtype=np.float64)
    p = np.empty((len(values), len(seeds)))
    s = np.empty_like(p)
    for i, v in enumerate(values):
        T, snr = point_args(v)
        for j, base in enumerate(seeds):
            est = run_point(scene, geometry, optics, pattern_kind, T, snr, derive_seed(base, 0),
                            derive_seed(derive_seed(base, i), 1), solver_cfg, density)
            p[i, j] = psnr(est, scene)
            s[i, j] = ssim(est, scene)
    config = {
        "geometry": geometry, "optics": optics, "pattern_kind": pattern_kind,
        "solver": solver_cfg, "seeds": tuple(seeds), "density": density,
    }
    return SweepResult(name, list(values), np.median(p, axis=1), np.median(s, axis=1), p, s, config)


def compression_sweep(scene, geometry: GeometryConfig, optics: OpticsConfig | None, pattern_kind: str,
                      T_list, snr_db: float | None = None, solver_cfg: SolverConfig | None = None,
                      seeds=(0,), density: float = 0.5) -> SweepResult:
    solver_cfg = solver_cfg or SolverConfig()
    return _sweep("T", list(T_list), lambda T: (T, snr_db), scene, geometry, optics,
                  pattern_kind, solver_cfg, seeds, density)


def noise_sweep(scene, geometry: GeometryConfig, optics: OpticsConfig | None, pattern_kind: str,
                snr_list, T: int, solver_cfg: SolverConfig | None = None,
                seeds=(0,), density: float = 0.5) -> SweepResult:
    """``None`` in ``snr_list`` is a noiseless point."""
    solver_cfg = solver_cfg or SolverConfig()
    return _sweep("snr_db", list(snr_list), lambda snr: (T, snr), scene, geometry, optics,
                  pattern_kind, solver_cfg, seeds, density)
