"""DMD modulation sequences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .errors import ConfigError
from .model import GeometryConfig

KINDS = ("random-binary", "hadamard", "pixel-scan")


@dataclass
class PatternSequence:
    """Ordered binary masks, stored as a ``(T, rows, cols)`` uint8 array."""

    masks: np.ndarray
    kind: str
    seed: int | None = None

    def __post_init__(self):
        self.masks = np.ascontiguousarray(self.masks, dtype=np.uint8)
        if self.masks.ndim != 3 or self.masks.shape[0] < 1:
            raise ConfigError("a pattern sequence needs at least one 2-D mask")
        if self.masks.max(initial=0) > 1:
            raise ConfigError("pattern values must be 0 or 1")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown pattern kind {self.kind!r}; expected one of {KINDS}")

    def __len__(self):
        return self.masks.shape[0]

    def __getitem__(self, t):
        if isinstance(t, slice):
            return PatternSequence(self.masks[t], self.kind, self.seed)
        return self.masks[t]

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]


def random_binary_sequence(geometry: GeometryConfig, count: int, density: float = 0.5,
                           seed: int = 0) -> PatternSequence:
    if count < 1:
        raise ConfigError(f"pattern count must be >= 1, got {count}")
    if not 0 < density < 1:
        raise ConfigError(f"density must lie in (0, 1), got {density}")
    rng = np.random.default_rng(seed)
    masks = rng.random((count,) + geometry.dmd_shape) < density
    return PatternSequence(masks, "random-binary", seed)


def hadamard_codes(block_size: int, count: int) -> np.ndarray:
    """Rows 1..count of the Sylvester matrix of order ``block_size``, as 0/1.

    Row 0 (all ones) is never emitted, so every code has exactly half its
    entries on.
    """
    if block_size < 2 or block_size & (block_size - 1):
        raise ConfigError(f"Hadamard codes need a power-of-two block size, got {block_size}")
    if not 1 <= count <= block_size - 1:
        raise ConfigError(f"count must be in [1, {block_size - 1}] for block size {block_size}")
    h = hadamard(block_size)[1:count + 1]
    return ((1 + h) // 2).astype(np.uint8)


def hadamard_sequence(geometry: GeometryConfig, count: int) -> PatternSequence:
    """Every block shows the same code; codes are reshaped row-major into the block."""
    codes = hadamard_codes(geometry.block_size, count)
    blocks = codes.reshape(count, geometry.block_rows, geometry.block_cols)
    masks = np.tile(blocks, (1, geometry.sensor_rows, geometry.sensor_cols))
    return PatternSequence(masks, "hadamard")


def _splits(n: int, groups: int) -> np.ndarray:
    # group start offsets; the last group absorbs the remainder
    base = n // groups
    return np.append(np.arange(groups) * base, n)


def pixel_scan_length(dmd_rows: int, dmd_cols: int, groups_rows: int = 18, groups_cols: int = 20) -> int:
    """Number of captures needed to scan a DMD with the given group grid."""
    if not (1 <= groups_rows <= dmd_rows and 1 <= groups_cols <= dmd_cols):
        raise ConfigError(
            f"{groups_rows}x{groups_cols} groups do not fit a {dmd_rows}x{dmd_cols} DMD"
        )
    r = np.diff(_splits(dmd_rows, groups_rows)).max()
    c = np.diff(_splits(dmd_cols, groups_cols)).max()
    return int(r * c)


def scan_group_index(shape: tuple[int, int], groups_rows: int, groups_cols: int):
    """Per-mirror (group id, position within its group, row-major)."""
    rows, cols = shape
    rs, cs = _splits(rows, groups_rows), _splits(cols, groups_cols)
    gr = np.minimum(np.arange(rows) // (rows // groups_rows), groups_rows - 1)
    gc = np.minimum(np.arange(cols) // (cols // groups_cols), groups_cols - 1)
    width = np.diff(cs)[gc]
    local_r = np.arange(rows) - rs[gr]
    local_c = np.arange(cols) - cs[gc]
    group = gr[:, None] * groups_cols + gc[None, :]
    position = local_r[:, None] * width[None, :] + local_c[None, :]
    return group, position


def pixel_scan_sequence(geometry: GeometryConfig, groups_rows: int = 18,
                        groups_cols: int = 20) -> PatternSequence:
    """Pattern ``p`` lights the ``p``-th mirror (row-major) of every group.

    Groups smaller than the largest one simply stay dark once exhausted, so
    each mirror is lit in exactly one pattern.
    """
    length = pixel_scan_length(geometry.dmd_rows, geometry.dmd_cols, groups_rows, groups_cols)
    _, position = scan_group_index(geometry.dmd_shape, groups_rows, groups_cols)
    masks = np.zeros((length,) + geometry.dmd_shape, dtype=np.uint8)
    r, c = np.indices(geometry.dmd_shape)
    masks[position, r, c] = 1
    return PatternSequence(masks, "pixel-scan")


def make_sequence(kind: str, geometry: GeometryConfig, count: int | None = None, *,
                  density: float = 0.5, seed: int = 0, groups: tuple[int, int] | None = None
                  ) -> PatternSequence:
    """Dispatch on ``kind``; pixel-scan defaults to one group per sensor pixel."""
    if kind == "random-binary":
        return random_binary_sequence(geometry, count, density, seed)
    if kind == "hadamard":
        return hadamard_sequence(geometry, count)
    if kind == "pixel-scan":
        groups = groups or geometry.sensor_shape
        seq = pixel_scan_sequence(geometry, *groups)
        if count is not None and count != len(seq):
            raise ConfigError(f"pixel-scan with {groups} groups has {len(seq)} patterns, not {count}")
        return seq
    raise ConfigError(f"unknown pattern kind {kind!r}")
