"""Impulse-scanning calibration of the DMD-to-sensor map.

One mirror per group is switched on at a time against a uniform white
scene; every sensor pixel in a capture is attributed to the lit mirror
nearest to it (Chebyshev distance between the pixel's nominal footprint
centre and the mirror).  Responses are exact when the lit mirrors are far
enough apart that their footprints do not overlap, which always holds for
the default one-group-per-sensor-pixel grid under ideal optics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import io
from .errors import CalibrationError, DimensionError
from .model import GeometryConfig, NoiseSpec, OpticsConfig, SparseMap, build_map, simulate_capture
from .patterns import PatternSequence, pixel_scan_sequence


@dataclass
class CalibrationRun:
    geometry: GeometryConfig
    true_optics: OpticsConfig
    groups: tuple[int, int]
    patterns: PatternSequence
    captures: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        self.captures = np.asarray(self.captures, dtype=np.float64)
        if self.captures.shape != (len(self.patterns),) + self.geometry.sensor_shape:
            raise DimensionError("one sensor frame per calibration pattern is required")

    @property
    def complete(self) -> bool:
        return bool(np.all(self.patterns.masks.sum(axis=0, dtype=np.int64) == 1))


@dataclass
class CalibrationEstimate:
    map_est: SparseMap
    support_threshold: float
    residual_stats: np.ndarray | None = None


@dataclass
class CalibrationScore:
    support_precision: float
    support_recall: float
    frobenius_rel_error: float
    n_predicted: int


def run_calibration(geometry: GeometryConfig, optics: OpticsConfig | None = None,
                    groups: tuple[int, int] | None = None, noise: NoiseSpec | None = None) -> CalibrationRun:
    optics = optics or OpticsConfig()
    noise = noise or NoiseSpec()
    groups = tuple(groups or geometry.sensor_shape)
    truth = build_map(geometry, optics)
    seq = pixel_scan_sequence(geometry, *groups)
    captures = simulate_capture(truth, seq, np.ones(geometry.dmd_shape), noise)
    return CalibrationRun(geometry, optics, groups, seq, captures, noise)


def _sensor_centres(geometry: GeometryConfig) -> np.ndarray:
    r = (np.arange(geometry.sensor_rows) + 0.5) * geometry.block_rows - 0.5
    c = (np.arange(geometry.sensor_cols) + 0.5) * geometry.block_cols - 0.5
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return np.column_stack([rr.ravel(), cc.ravel()])


def estimate_map(run: CalibrationRun, support_threshold: float = 0.01,
                 truth: SparseMap | None = None) -> CalibrationEstimate:
    """Assemble ``C`` from impulse responses.

    Entries below ``support_threshold`` times their column maximum are
    dropped, as are negative responses.  ``residual_stats`` holds the
    per-column relative error against ``truth`` (rebuilt from the run's
    optics when not given).
    """
    if not 0 < support_threshold < 1:
        raise CalibrationError(f"support threshold must lie in (0, 1), got {support_threshold}")
    if not run.complete:
        raise CalibrationError("calibration run does not pulse every mirror exactly once")
    geom = run.geometry
    centres = _sensor_centres(geom)
    n_sensor = geom.n_sensor
    sensor_idx = np.arange(n_sensor)
    rows, cols, vals = [], [], []
    for mask, frame in zip(run.patterns.masks, run.captures):
        lit = np.flatnonzero(mask.ravel())
        if lit.size == 0:
            continue
        coords = np.column_stack(np.unravel_index(lit, geom.dmd_shape)).astype(np.float64)
        _, nearest = cKDTree(coords).query(centres, p=math.inf)
        rows.append(sensor_idx)
        cols.append(lit[nearest])
        vals.append(frame.ravel())
    i = np.concatenate(rows)
    j = np.concatenate(cols)
    w = np.concatenate(vals)

    col_max = np.zeros(geom.n_dmd)
    np.maximum.at(col_max, j, w)
    keep = (w > 0) & (w >= support_threshold * col_max[j])
    map_est = SparseMap.from_entries(i[keep], j[keep], w[keep], geom.sensor_shape, geom.dmd_shape)

    if truth is None:
        truth = build_map(geom, run.true_optics)
    diff = (map_est.matrix - truth.matrix).tocsc()
    err = np.sqrt(np.asarray(diff.multiply(diff).sum(axis=0)).ravel())
    ref = np.sqrt(np.asarray(truth.matrix.multiply(truth.matrix).sum(axis=0)).ravel())
    with np.errstate(divide="ignore", invalid="ignore"):
        stats = np.where(ref > 0, err / ref, np.where(err > 0, np.inf, 0.0))
    return CalibrationEstimate(map_est, support_threshold, stats)


def calibration_error(est: SparseMap, truth: SparseMap) -> CalibrationScore:
    """Support precision/recall and relative Frobenius error.

    With no predicted entries precision is reported as 1 (and
    ``n_predicted`` is 0 so callers can tell).
    """
    if est.matrix.shape != truth.matrix.shape:
        raise DimensionError(f"map shapes differ: {est.matrix.shape} vs {truth.matrix.shape}")
    e = est.matrix.copy()
    t = truth.matrix.copy()
    e.data[:] = 1
    t.data[:] = 1
    hits = int(e.multiply(t).sum())
    n_pred, n_true = est.nnz, truth.nnz
    precision = hits / n_pred if n_pred else 1.0
    recall = hits / n_true if n_true else 1.0
    norm = math.sqrt(float(truth.matrix.multiply(truth.matrix).sum()))
    diff = est.matrix - truth.matrix
    frob = math.sqrt(float(diff.multiply(diff).sum()))
    return CalibrationScore(precision, recall, frob / norm if norm else frob, n_pred)


def save_run(run: CalibrationRun, directory, estimate: CalibrationEstimate | None = None) -> Path:
    """Persist a run as ``manifest.txt`` plus one float raster per capture."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for p, frame in enumerate(run.captures):
        io.write_fpfr(directory / f"capture_{p:05d}.fpfr", frame)
    io.write_patterns(directory / "patterns.fpat", run.patterns)
    if estimate is not None:
        io.write_map(directory / "map_est.fpcs", estimate.map_est)
    g, o = run.geometry, run.true_optics
    io.write_manifest(directory, {
        "kind": "calibration",
        "geometry.sensor_rows": g.sensor_rows,
        "geometry.sensor_cols": g.sensor_cols,
        "geometry.block_rows": g.block_rows,
        "geometry.block_cols": g.block_cols,
        "geometry.f_dmd": g.f_dmd,
        "optics.objective_blur_sigma": o.objective_blur_sigma,
        "optics.relay_blur_sigma": o.relay_blur_sigma,
        "optics.misalignment_shift": "%d,%d" % o.misalignment_shift,
        "groups": "%d,%d" % run.groups,
        "noise.snr_db": "none" if run.noise.snr_db is None else run.noise.snr_db,
        "noise.seed": run.noise.seed,
        "captures": len(run.patterns),
    })
    return directory


def load_run(directory) -> CalibrationRun:
    directory = Path(directory)
    m = io.read_manifest(directory)
    geometry = GeometryConfig(
        int(m["geometry.sensor_rows"]), int(m["geometry.sensor_cols"]),
        int(m["geometry.block_rows"]), int(m["geometry.block_cols"]), float(m["geometry.f_dmd"]),
    )
    optics = OpticsConfig(
        float(m["optics.objective_blur_sigma"]), float(m["optics.relay_blur_sigma"]),
        tuple(int(v) for v in m["optics.misalignment_shift"].split(",")),
    )
    snr = m["noise.snr_db"]
    noise = NoiseSpec(None if snr == "none" else float(snr), int(m["noise.seed"]))
    patterns = io.read_patterns(directory / "patterns.fpat")
    captures = np.stack([io.read_fpfr(directory / f"capture_{p:05d}.fpfr")
                         for p in range(int(m["captures"]))])
    groups = tuple(int(v) for v in m["groups"].split(","))
    return CalibrationRun(geometry, optics, groups, patterns, captures, noise)
