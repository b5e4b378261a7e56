"""On-disk formats.

``.fpcs``  sparse map: ``b"FPCS"``, u32 version, u64 n_sensor, u64 n_dmd,
           u64 nnz, then nnz records (u64 i, u64 j, f64 w), little-endian,
           in canonical (i, j) order.
``.fpat``  pattern sequence: ``b"FPAT"``, u32 version, u32 kind code,
           u64 count, u64 rows, u64 cols, i64 seed (-1 for none), then the
           masks bit-packed (MSB first) row-major across the whole stack.
``.fpfr``  float raster: ``b"FPFR"``, u32 rows, u32 cols, then rows*cols
           little-endian float32, row-major.
``.pgm``   16-bit binary portable graymap (P5, big-endian samples).
``.pbm``   plain-text portable bitmap (P1) of a single pattern.

Every output directory carries a ``manifest.txt`` of sorted ``key = value``
lines ending in a SHA-256 over the other files, so reruns can be compared
by manifest alone.
"""
from __future__ import annotations

import csv
import hashlib
import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import SparseMap

MAP_MAGIC = b"FPCS"
PATTERN_MAGIC = b"FPAT"
RASTER_MAGIC = b"FPFR"
VERSION = 1
MANIFEST = "manifest.txt"

_MAP_HEADER = struct.Struct("<4sIQQQ")
_PAT_HEADER = struct.Struct("<4sIIQQQq")
_RASTER_HEADER = struct.Struct("<4sII")
_TRIPLET = np.dtype([("i", "<u8"), ("j", "<u8"), ("w", "<f8")])
_KIND_CODES = {"random-binary": 0, "hadamard": 1, "pixel-scan": 2}


def _read_header(data: bytes, header: struct.Struct, magic: bytes, path) -> tuple:
    if len(data) < header.size:
        raise FormatError(f"{path}: truncated header")
    fields = header.unpack_from(data)
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}")
    return fields


def write_map(path, smap: SparseMap) -> None:
    i, j, w = smap.entries()
    rec = np.empty(i.size, dtype=_TRIPLET)
    rec["i"], rec["j"], rec["w"] = i, j, w
    with open(path, "wb") as fh:
        fh.write(_MAP_HEADER.pack(MAP_MAGIC, VERSION, smap.n_sensor_pixels, smap.n_dmd_pixels, i.size))
        fh.write(rec.tobytes())


def read_map(path, sensor_shape=None, dmd_shape=None) -> SparseMap:
    """Load a map; grid shapes default to flat ``(1, n)`` when not supplied."""
    data = Path(path).read_bytes()
    _, version, n_sensor, n_dmd, nnz = _read_header(data, _MAP_HEADER, MAP_MAGIC, path)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported map version {version}")
    body = data[_MAP_HEADER.size:]
    if len(body) != nnz * _TRIPLET.itemsize:
        raise FormatError(f"{path}: expected {nnz} entries, found {len(body) / _TRIPLET.itemsize:g}")
    rec = np.frombuffer(body, dtype=_TRIPLET)
    sensor_shape = sensor_shape or (1, n_sensor)
    dmd_shape = dmd_shape or (1, n_dmd)
    if np.prod(sensor_shape) != n_sensor or np.prod(dmd_shape) != n_dmd:
        raise FormatError(f"{path}: grid shapes do not match {n_sensor} x {n_dmd}")
    return SparseMap.from_entries(rec["i"].astype(np.int64), rec["j"].astype(np.int64),
                                  rec["w"], sensor_shape, dmd_shape)


def write_map_text(path, smap: SparseMap) -> None:
    i, j, w = smap.entries()
    with open(path, "w") as fh:
        for a, b, c in zip(i.tolist(), j.tolist(), w.tolist()):
            fh.write(f"{a} {b} {c!r}\n")


def read_map_text(path, sensor_shape, dmd_shape) -> SparseMap:
    i, j, w = [], [], []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise FormatError(f"{path}:{n}: expected 'i j w'")
        i.append(int(parts[0]))
        j.append(int(parts[1]))
        w.append(float(parts[2]))
    return SparseMap.from_entries(i, j, w, sensor_shape, dmd_shape)


def write_patterns(path, seq) -> None:
    masks = np.asarray(seq.masks, dtype=np.uint8)
    seed = -1 if seq.seed is None else int(seq.seed)
    with open(path, "wb") as fh:
        fh.write(_PAT_HEADER.pack(PATTERN_MAGIC, VERSION, _KIND_CODES[seq.kind], *masks.shape, seed))
        fh.write(np.packbits(masks.ravel()).tobytes())


def read_patterns(path):
    from .patterns import PatternSequence

    data = Path(path).read_bytes()
    _, version, code, count, rows, cols, seed = _read_header(data, _PAT_HEADER, PATTERN_MAGIC, path)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported pattern version {version}")
    n = count * rows * cols
    body = np.frombuffer(data, dtype=np.uint8, offset=_PAT_HEADER.size)
    if body.size != (n + 7) // 8:
        raise FormatError(f"{path}: pattern payload has wrong length")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise FormatError(f"{path}: unknown pattern kind code {code}")
    masks = np.unpackbits(body, count=n).reshape(count, rows, cols)
    return PatternSequence(masks, kinds[code], None if seed < 0 else seed)


def write_pbm(path, pattern: np.ndarray) -> None:
    pattern = np.asarray(pattern, dtype=np.uint8)
    rows, cols = pattern.shape
    lines = [f"P1\n{cols} {rows}\n"] + [" ".join(map(str, row)) + "\n" for row in pattern.tolist()]
    Path(path).write_text("".join(lines))


def write_fpfr(path, raster: np.ndarray) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise FormatError("float rasters are 2-D")
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(RASTER_MAGIC, *raster.shape))
        fh.write(raster.astype("<f4").tobytes())


def read_fpfr(path) -> np.ndarray:
    data = Path(path).read_bytes()
    _, rows, cols = _read_header(data, _RASTER_HEADER, RASTER_MAGIC, path)
    body = data[_RASTER_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise FormatError(f"{path}: raster payload has wrong length")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


def write_pgm16(path, image: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> None:
    """Linear map of ``[lo, hi]`` onto ``0..65535`` with clipping."""
    image = np.asarray(image, dtype=np.float64)
    scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0) * 65535.0
    rows, cols = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(np.rint(scaled).astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+65535\s", data)
    if m is None:
        raise FormatError(f"{path}: not a 16-bit P5 graymap")
    cols, rows = int(m.group(1)), int(m.group(2))
    body = data[m.end():]
    if len(body) != rows * cols * 2:
        raise FormatError(f"{path}: graymap payload has wrong length")
    return np.frombuffer(body, dtype=">u2").reshape(rows, cols).astype(np.uint16)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def content_hash(directory) -> str:
    """SHA-256 over every file except the manifest, in sorted relative-path order."""
    directory = Path(directory)
    h = hashlib.sha256()
    for p in sorted(q for q in directory.rglob("*") if q.is_file() and q.name != MANIFEST):
        h.update(p.relative_to(directory).as_posix().encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


def write_manifest(directory, entries: dict) -> str:
    directory = Path(directory)
    digest = content_hash(directory)
    lines = [f"{k} = {entries[k]}" for k in sorted(entries)]
    lines.append(f"content_sha256 = {digest}")
    (directory / MANIFEST).write_text("\n".join(lines) + "\n")
    return digest


def read_manifest(directory) -> dict[str, str]:
    path = Path(directory) / MANIFEST
    out = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise FormatError(f"{path}: malformed line {line!r}")
        out[key] = value
    return out
