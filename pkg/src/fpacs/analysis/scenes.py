"""Deterministic synthetic scenes in ``[0, 1]``."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from ..model import GeometryConfig


def _shape(target) -> tuple[int, int]:
    if isinstance(target, GeometryConfig):
        return target.dmd_shape
    rows, cols = target
    return int(rows), int(cols)


def bars(shape, frequency: float, phase: float = 0.0) -> np.ndarray:
    """Vertical square wave: 1 on the first half of each period, else 0."""
    if not 0 < frequency <= 0.5:
        raise ConfigError(f"bar frequency must lie in (0, 0.5] cycles/pixel, got {frequency}")
    rows, cols = _shape(shape)
    cyc = np.mod(np.arange(cols) * frequency + phase, 1.0)
    line = (cyc < 0.5).astype(np.float64)
    return np.tile(line, (rows, 1))


def checker(shape, size: int = 8) -> np.ndarray:
    if size < 1:
        raise ConfigError("checker size must be >= 1")
    rows, cols = _shape(shape)
    r, c = np.indices((rows, cols))
    return ((r // size + c // size) % 2).astype(np.float64)


def _element(width: int) -> np.ndarray:
    # three vertical then three horizontal bars, each 5w long, 1w apart
    side = 5 * width
    tile = np.zeros((side, 2 * side + width))
    for k in range(3):
        tile[:, 2 * k * width:(2 * k + 1) * width] = 1.0
        tile[2 * k * width:(2 * k + 1) * width, side + width:] = 1.0
    return tile


def usaf_like(shape, widths=(4, 2, 1), margin: int = 2) -> np.ndarray:
    """Bar triplets of decreasing width packed left-to-right, wrapping rows."""
    rows, cols = _shape(shape)
    out = np.zeros((rows, cols))
    r0, c0, row_h = margin, margin, 0
    for w in widths:
        tile = _element(int(w))
        h, wd = tile.shape
        if c0 + wd + margin > cols:
            r0, c0, row_h = r0 + row_h + margin, margin, 0
        if r0 + h + margin > rows or c0 + wd + margin > cols:
            raise ConfigError(f"chart element of width {w} does not fit a {rows}x{cols} frame")
        out[r0:r0 + h, c0:c0 + wd] = tile
        c0 += wd + margin
        row_h = max(row_h, h)
    return out


def make_chart(target, kind: str = "bars", **params) -> np.ndarray:
    """``target`` is a :class:`GeometryConfig` (DMD grid) or a ``(rows, cols)`` shape."""
    if kind == "bars":
        return bars(target, params.pop("frequency", 1 / 16), **params)
    if kind == "checker":
        return checker(target, **params)
    if kind == "usaf-like":
        return usaf_like(target, **params)
    raise ConfigError(f"unknown chart kind {kind!r}")


def _offset(v: float, t: int) -> int:
    # half-up rounding, symmetric about zero
    x = v * t
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def make_moving_scene(target, obj, velocity=(0.0, 1.0), n_frames: int = 8,
                      start=(0, 0), background: float = 0.0) -> np.ndarray:
    """Stack of frames with ``obj`` pasted at ``start + round(velocity * t)``.

    ``obj`` is a 2-D array in ``[0, 1]`` or an int giving the side of a
    white square.
    """
    rows, cols = _shape(target)
    if isinstance(obj, (int, np.integer)):
        obj = np.ones((int(obj), int(obj)))
    obj = np.asarray(obj, dtype=np.float64)
    if obj.ndim != 2 or obj.min() < 0 or obj.max() > 1:
        raise ConfigError("object must be a 2-D array with values in [0, 1]")
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    h, w = obj.shape
    cube = np.full((n_frames, rows, cols), float(background))
    for t in range(n_frames):
        r = start[0] + _offset(velocity[0], t)
        c = start[1] + _offset(velocity[1], t)
        if r < 0 or c < 0 or r + h > rows or c + w > cols:
            raise ConfigError(f"object leaves the {rows}x{cols} frame at t={t}")
        cube[t, r:r + h, c:c + w] = obj
    return cube
