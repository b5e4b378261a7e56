"""Optical forward model of a DMD-coded focal-plane-array camera.

A scene ``x`` lives on the DMD grid (``dmd_rows x dmd_cols``).  At time ``t``
the DMD applies a binary mask ``D_t`` and the relay optics integrate each
``block_rows x block_cols`` patch of mirrors onto one sensor pixel, so the
coded low-resolution frame is ``y_t = C D_t x``.  ``C`` is a sparse matrix
(:class:`SparseMap`) with ``n_sensor`` rows and ``n_dmd`` columns.

Conventions
-----------
* Frames are 2-D float arrays, videos are 3-D arrays ``(frames, rows, cols)``.
* Patterns are 2-D ``uint8`` arrays with values in {0, 1}; a sequence of them
  is a 3-D array ``(T, rows, cols)`` or a :class:`fpacs.patterns.PatternSequence`.
* Pixel indices are row-major on both grids.
* The sensor reports the *mean* of its block, so every column of an
  ideal-optics ``C`` holds a single ``1 / (block_rows * block_cols)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError

__all__ = [
    "GeometryConfig",
    "OpticsConfig",
    "NoiseSpec",
    "SparseMap",
    "StackedSystem",
    "gaussian_kernel",
    "build_map",
    "forward",
    "adjoint",
    "simulate_capture",
    "stack",
]


@dataclass(frozen=True)
class GeometryConfig:
    """Sensor/DMD layout.

    ``dmd_rows``/``dmd_cols`` default to the exact tiling
    ``sensor * block``; passing them explicitly only validates the tiling.
    """

    sensor_rows: int = 64
    sensor_cols: int = 64
    block_rows: int = 16
    block_cols: int = 16
    f_dmd: float = 480.0
    dmd_rows: int | None = None
    dmd_cols: int | None = None

    def __post_init__(self):
        for name in ("sensor_rows", "sensor_cols", "block_rows", "block_cols"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not (self.f_dmd > 0 and math.isfinite(self.f_dmd)):
            raise ConfigError(f"f_dmd must be positive, got {self.f_dmd!r}")
        rows = self.sensor_rows * self.block_rows
        cols = self.sensor_cols * self.block_cols
        if self.dmd_rows is None:
            object.__setattr__(self, "dmd_rows", rows)
        if self.dmd_cols is None:
            object.__setattr__(self, "dmd_cols", cols)
        if (self.dmd_rows, self.dmd_cols) != (rows, cols):
            raise ConfigError(
                f"DMD {self.dmd_rows}x{self.dmd_cols} is not tiled by "
                f"{self.sensor_rows}x{self.sensor_cols} blocks of "
                f"{self.block_rows}x{self.block_cols}"
            )

    @property
    def dmd_shape(self) -> tuple[int, int]:
        return (self.dmd_rows, self.dmd_cols)

    @property
    def sensor_shape(self) -> tuple[int, int]:
        return (self.sensor_rows, self.sensor_cols)

    @property
    def n_dmd(self) -> int:
        return self.dmd_rows * self.dmd_cols

    @property
    def n_sensor(self) -> int:
        return self.sensor_rows * self.sensor_cols

    @property
    def block_size(self) -> int:
        """Mirrors per sensor pixel."""
        return self.block_rows * self.block_cols


@dataclass(frozen=True)
class OpticsConfig:
    """Blur and misalignment of the simulated optics, in DMD pixels.

    ``objective_blur_sigma`` and ``relay_blur_sigma`` are Gaussian widths;
    both kernels are folded into ``C``.  ``misalignment_shift`` offsets the
    block grid by ``(du, dv)`` mirrors.
    """

    objective_blur_sigma: float = 0.0
    relay_blur_sigma: float = 0.0
    misalignment_shift: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "misalignment_shift", tuple(int(s) for s in self.misalignment_shift))
        if len(self.misalignment_shift) != 2:
            raise ConfigError("misalignment_shift must be a pair (du, dv)")
        for name in ("objective_blur_sigma", "relay_blur_sigma"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and >= 0, got {value!r}")

    @property
    def ideal(self) -> bool:
        return (
            self.objective_blur_sigma == 0
            and self.relay_blur_sigma == 0
            and self.misalignment_shift == (0, 0)
        )

    def check(self, geometry: GeometryConfig) -> None:
        du, dv = self.misalignment_shift
        if abs(du) >= geometry.block_rows or abs(dv) >= geometry.block_cols:
            raise ConfigError(
                f"misalignment_shift {self.misalignment_shift} must be smaller than the "
                f"{geometry.block_rows}x{geometry.block_cols} block"
            )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise at a given SNR; ``snr_db=None`` is noiseless."""

    snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite; use None for a noiseless capture")


@dataclass
class SparseMap:
    """The calibration matrix ``C`` (sensor pixels x DMD mirrors).

    Stored as a canonical CSR matrix: indices sorted within rows, no
    duplicates, strictly positive weights.  Iterating rows in order and
    columns within a row gives the (i, j) canonical entry order.
    """

    matrix: sp.csr_matrix
    sensor_shape: tuple[int, int]
    dmd_shape: tuple[int, int]

    def __post_init__(self):
        self.sensor_shape = tuple(int(s) for s in self.sensor_shape)
        self.dmd_shape = tuple(int(s) for s in self.dmd_shape)
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        expected = (math.prod(self.sensor_shape), math.prod(self.dmd_shape))
        if m.shape != expected:
            raise DimensionError(f"matrix shape {m.shape} does not match grids {expected}")
        if m.nnz and m.data.min() < 0:
            raise ValueError("SparseMap weights must be nonnegative")
        self.matrix = m

    @classmethod
    def from_entries(cls, i, j, w, sensor_shape, dmd_shape) -> "SparseMap":
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        shape = (math.prod(sensor_shape), math.prod(dmd_shape))
        if i.size:
            if i.min() < 0 or j.min() < 0 or i.max() >= shape[0] or j.max() >= shape[1]:
                raise DimensionError("entry index out of range")
            keys = i * shape[1] + j
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (i, j) entries in SparseMap")
        m = sp.coo_matrix((w, (i, j)), shape=shape).tocsr()
        return cls(m, sensor_shape, dmd_shape)

    @property
    def n_sensor_pixels(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_dmd_pixels(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, w) arrays in canonical order (by i, then j)."""
        m = self.matrix
        i = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
        return i, m.indices.astype(np.int64), m.data.copy()

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def scaled(self, factor: float) -> "SparseMap":
        return SparseMap(self.matrix * float(factor), self.sensor_shape, self.dmd_shape)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unit-sum 1-D Gaussian truncated at +-3 sigma (``[1.]`` for sigma 0)."""
    radius = int(math.floor(3.0 * sigma))
    if sigma == 0 or radius == 0:
        return np.ones(1)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension (d c b a | a b c d | d c b a), period 2n
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def _axis_weights(n_dmd: int, n_sensor: int, block: int, shift: int, kernel: np.ndarray) -> np.ndarray:
    """W[r, s]: fraction of mirror line ``r`` landing on sensor line ``s``."""
    radius = (kernel.size - 1) // 2
    src = np.repeat(np.arange(n_dmd), kernel.size)
    tgt = _reflect(src + np.tile(np.arange(-radius, radius + 1), n_dmd), n_dmd)
    s = np.floor_divide(tgt - shift, block)
    w = np.tile(kernel, n_dmd)
    keep = (s >= 0) & (s < n_sensor)
    out = np.zeros((n_dmd, n_sensor))
    np.add.at(out, (src[keep], s[keep]), w[keep])
    return out


def build_map(geometry: GeometryConfig, optics: OpticsConfig | None = None) -> SparseMap:
    """Build ``C`` for the given layout and optics.

    Each mirror's light is spread by the combined (objective * relay)
    Gaussian, folded back at the DMD border, then averaged over the shifted
    block grid.  Light pushed outside the sensor by the shift is lost.
    The kernel is separable, so ``C = kron(Wr^T, Wc^T) / block_size``.
    """
    optics = optics or OpticsConfig()
    optics.check(geometry)
    kernel = np.convolve(
        gaussian_kernel(optics.objective_blur_sigma), gaussian_kernel(optics.relay_blur_sigma)
    )
    du, dv = optics.misalignment_shift
    wr = _axis_weights(geometry.dmd_rows, geometry.sensor_rows, geometry.block_rows, du, kernel)
    wc = _axis_weights(geometry.dmd_cols, geometry.sensor_cols, geometry.block_cols, dv, kernel)
    c = sp.kron(sp.csr_matrix(wr.T), sp.csr_matrix(wc.T), format="csr") / geometry.block_size
    return SparseMap(c, geometry.sensor_shape, geometry.dmd_shape)


def _check_pattern(smap: SparseMap, pattern: np.ndarray) -> np.ndarray:
    pattern = np.asarray(pattern)
    if pattern.shape != smap.dmd_shape:
        raise DimensionError(f"pattern shape {pattern.shape} != DMD shape {smap.dmd_shape}")
    return pattern


def forward(smap: SparseMap, pattern: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Noiseless sensor frame ``C (pattern * x)``."""
    pattern = _check_pattern(smap, pattern)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != smap.dmd_shape:
        raise DimensionError(f"scene shape {x.shape} != DMD shape {smap.dmd_shape}")
    return (smap.matrix @ (pattern * x).ravel()).reshape(smap.sensor_shape)


def adjoint(smap: SparseMap, pattern: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``(C D)^T y = D C^T y``."""
    pattern = _check_pattern(smap, pattern)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != smap.sensor_shape:
        raise DimensionError(f"sensor frame shape {y.shape} != {smap.sensor_shape}")
    return pattern * (smap.matrix.T @ y.ravel()).reshape(smap.dmd_shape)


def _masks(patterns) -> np.ndarray:
    masks = np.asarray(getattr(patterns, "masks", patterns))
    if masks.ndim == 2:
        masks = masks[None]
    if masks.ndim != 3 or masks.shape[0] < 1:
        raise DimensionError("expected a non-empty (T, rows, cols) pattern stack")
    return masks


def _forward_many(smap: SparseMap, masks: np.ndarray, scenes: np.ndarray) -> np.ndarray:
    # scenes broadcast against masks: (T, R, C) or (R, C)
    coded = (masks * scenes).reshape(masks.shape[0], -1)
    return (coded @ smap.matrix.T).reshape((masks.shape[0],) + smap.sensor_shape)


def _adjoint_many(smap: SparseMap, masks: np.ndarray, ys: np.ndarray) -> np.ndarray:
    back = ys.reshape(ys.shape[0], -1) @ smap.matrix
    return masks * back.reshape((ys.shape[0],) + smap.dmd_shape)


def simulate_capture(smap: SparseMap, patterns, scene: np.ndarray, noise: NoiseSpec | None = None) -> np.ndarray:
    """Simulate ``T`` coded sensor frames, returned as a ``(T, Kr, Kc)`` array.

    A 2-D ``scene`` is held static; a 3-D scene must have one frame per
    pattern.  Noise, if any, uses a single sigma derived from the rms of the
    whole clean capture.
    """
    masks = _masks(patterns)
    if masks.shape[1:] != smap.dmd_shape:
        raise DimensionError(f"pattern shape {masks.shape[1:]} != DMD shape {smap.dmd_shape}")
    scene = np.asarray(scene, dtype=np.float64)
    if scene.ndim == 3:
        if scene.shape[0] != masks.shape[0]:
            raise DimensionError(
                f"video has {scene.shape[0]} frames but {masks.shape[0]} patterns were given"
            )
        if scene.shape[1:] != smap.dmd_shape:
            raise DimensionError(f"scene shape {scene.shape[1:]} != DMD shape {smap.dmd_shape}")
    elif scene.shape != smap.dmd_shape:
        raise DimensionError(f"scene shape {scene.shape} != DMD shape {smap.dmd_shape}")
    clean = _forward_many(smap, masks, scene)
    if noise is None or noise.snr_db is None:
        return clean
    rms = math.sqrt(float(np.mean(clean**2)))
    if rms == 0:
        raise ValueError("cannot set an SNR on a zero-energy capture")
    sigma = rms / 10 ** (noise.snr_db / 20)
    rng = np.random.default_rng(noise.seed)
    return clean + sigma * rng.standard_normal(clean.shape)


@dataclass
class StackedSystem:
    """``T`` (pattern, measurement) pairs grouped onto ``frame_count`` unknown frames.

    Measurements ``g*G .. (g+1)*G - 1`` (``G = T / frame_count``) all observe
    unknown frame ``g``.  With ``frame_count == 1`` this is the single-image
    system; with more frames it is the video system solved with a 3-D prior.
    """

    geometry: GeometryConfig
    map: SparseMap
    patterns: object
    measurements: np.ndarray
    frame_count: int = 1
    masks: np.ndarray = field(init=False, repr=False)
    _operator: sp.csr_matrix | None = field(init=False, repr=False, default=None)
    _operator_t: sp.csr_matrix | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.masks = _masks(self.patterns)
        self.measurements = np.asarray(self.measurements, dtype=np.float64)
        t = self.masks.shape[0]
        if self.measurements.shape != (t,) + self.map.sensor_shape:
            raise DimensionError(
                f"measurements {self.measurements.shape} do not match {t} frames of "
                f"{self.map.sensor_shape}"
            )
        if self.masks.shape[1:] != self.map.dmd_shape or self.map.dmd_shape != self.geometry.dmd_shape:
            raise DimensionError("pattern, map and geometry DMD shapes disagree")
        if self.frame_count < 1 or t % self.frame_count:
            raise DimensionError(f"{t} measurements cannot be split into {self.frame_count} frames")

    @property
    def T(self) -> int:
        return self.masks.shape[0]

    @property
    def group_size(self) -> int:
        return self.T // self.frame_count

    @property
    def unknown_shape(self) -> tuple[int, ...]:
        if self.frame_count == 1:
            return self.map.dmd_shape
        return (self.frame_count,) + self.map.dmd_shape

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, columns) of the stacked operator."""
        return (self.T * self.map.n_sensor_pixels, self.frame_count * self.map.n_dmd_pixels)

    @property
    def alpha(self) -> float:
        """Recovered pixels per measured sample for one frame group."""
        return self.map.n_dmd_pixels / (self.group_size * self.map.n_sensor_pixels)

    @property
    def operator(self) -> sp.csr_matrix:
        """The stacked matrix ``A`` as CSR (built on first use, zero entries dropped)."""
        if self._operator is None:
            i, j, w = self.map.entries()
            ns, n = self.map.n_sensor_pixels, self.map.n_dmd_pixels
            flat = self.masks.reshape(self.T, -1)
            rows, cols, vals = [], [], []
            for t in range(self.T):
                keep = flat[t, j].astype(bool)
                rows.append(i[keep] + t * ns)
                cols.append(j[keep] + (t // self.group_size) * n)
                vals.append(w[keep])
            self._operator = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=self.shape
            )
            self._operator_t = self._operator.T.tocsr()
        return self._operator

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.unknown_shape:
            raise DimensionError(f"unknown has shape {x.shape}, expected {self.unknown_shape}")
        return (self.operator @ x.ravel()).reshape(self.measurements.shape)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.measurements.shape:
            raise DimensionError(f"measurement shape {y.shape} != {self.measurements.shape}")
        self.operator
        return (self._operator_t @ y.ravel()).reshape(self.unknown_shape)

    def dense(self) -> np.ndarray:
        """Explicit stacked matrix; only sensible at desk scale."""
        c = self.map.toarray()
        n = self.map.n_dmd_pixels
        out = np.zeros(self.shape)
        rows = self.map.n_sensor_pixels
        for t in range(self.T):
            g = t // self.group_size
            out[t * rows:(t + 1) * rows, g * n:(g + 1) * n] = c * self.masks[t].ravel()
        return out


def stack(smap: SparseMap, patterns, measurements, geometry: GeometryConfig | None = None,
          frame_count: int = 1) -> StackedSystem:
    """Group ``T`` pattern/measurement pairs under ``frame_count`` unknown frames."""
    masks = _masks(patterns)
    measurements = np.asarray(measurements, dtype=np.float64)
    if measurements.ndim == 2:
        measurements = measurements[None]
    if measurements.shape[0] == 0:
        raise DimensionError("no measurements to stack")
    if measurements.shape[0] != masks.shape[0]:
        raise DimensionError(
            f"{masks.shape[0]} patterns but {measurements.shape[0]} measurements"
        )
    if geometry is None:
        (kr, kc), (r, c) = smap.sensor_shape, smap.dmd_shape
        if r % kr or c % kc:
            raise DimensionError("map grids do not tile; pass geometry explicitly")
        geometry = GeometryConfig(kr, kc, r // kr, c // kc)
    return StackedSystem(geometry, smap, patterns, measurements, frame_count)
