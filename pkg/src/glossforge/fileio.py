"""Raster and metadata file formats.

GFR1 float raster layout (little endian)::

    b"GFR1" | u32 width | u32 height | f32 pixel_pitch_um | f32 values, row major

PNG files are written with pypng, which embeds no timestamps, so identical
arrays always produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import png

from .errors import RasterFormatError

GFR_MAGIC = b"GFR1"
GFR_HEADER = struct.Struct("<4sIIf")

# palette for print layers: 0 empty, then C, M, Y, K, W
INK_PALETTE = [(255, 255, 255), (0, 174, 239), (236, 0, 140), (255, 242, 0), (0, 0, 0), (250, 250, 250)]


def write_gfr(path, values, pixel_pitch_um: float = 0.0) -> Path:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise RasterFormatError(f"GFR1 holds 2-D rasters, got shape {arr.shape}")
    arr32 = arr.astype("<f4")
    if not np.all(np.isfinite(arr32)):
        raise RasterFormatError(f"{path}: NaN or infinite values cannot be stored in GFR1")
    h, w = arr32.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(GFR_HEADER.pack(GFR_MAGIC, w, h, float(pixel_pitch_um)))
        fh.write(np.ascontiguousarray(arr32).tobytes())
    return path


def read_gfr(path):
    """Return ``(values float32 array, pixel_pitch_um)``."""
    data = Path(path).read_bytes()
    if len(data) < GFR_HEADER.size:
        raise RasterFormatError(f"{path}: truncated header")
    magic, w, h, pitch = GFR_HEADER.unpack_from(data)
    if magic != GFR_MAGIC:
        raise RasterFormatError(f"{path}: bad magic {magic!r}")
    expect = GFR_HEADER.size + 4 * w * h
    if len(data) != expect:
        raise RasterFormatError(f"{path}: size {len(data)} bytes, expected {expect} for {w}x{h}")
    vals = np.frombuffer(data, dtype="<f4", offset=GFR_HEADER.size).reshape(h, w).astype(np.float32)
    if not np.all(np.isfinite(vals)):
        raise RasterFormatError(f"{path}: contains NaN")
    return vals, float(pitch)


def to_uint16(values) -> tuple[np.ndarray, int]:
    """Quantize [0, 1] floats to 16 bit; returns the array and the number of clipped samples."""
    v = np.asarray(values, dtype=float)
    clipped = int(np.count_nonzero((v < 0) | (v > 1)))
    return np.round(np.clip(v, 0.0, 1.0) * 65535.0).astype(np.uint16), clipped


def write_png16(path, values) -> int:
    """Write a float image in [0, 1] (grey or RGB) as a 16-bit PNG. Returns clipped sample count."""
    q, clipped = to_uint16(values) if np.asarray(values).dtype != np.uint16 else (np.asarray(values), 0)
    if q.ndim == 2:
        h, w = q.shape
        writer = png.Writer(w, h, greyscale=True, bitdepth=16)
        rows = q
    elif q.ndim == 3 and q.shape[2] == 3:
        h, w = q.shape[:2]
        writer = png.Writer(w, h, greyscale=False, bitdepth=16)
        rows = q.reshape(h, w * 3)
    else:
        raise RasterFormatError(f"unsupported image shape {q.shape}")
    with open(path, "wb") as fh:
        writer.write(fh, rows)
    return clipped


def read_png16(path, as_float: bool = True):
    w, h, rows, info = png.Reader(filename=str(path)).read()
    if info["bitdepth"] != 16 or info.get("palette"):
        raise RasterFormatError(f"{path}: expected a 16-bit PNG, got bit depth {info['bitdepth']}")
    planes = info["planes"]
    arr = np.vstack([np.asarray(r, dtype=np.uint16) for r in rows])
    if planes == 3:
        arr = arr.reshape(h, w, 3)
    elif planes != 1:
        raise RasterFormatError(f"{path}: unsupported channel count {planes}")
    return arr.astype(float) / 65535.0 if as_float else arr


def write_mask_png(path, mask) -> None:
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    writer = png.Writer(w, h, greyscale=True, bitdepth=1)
    with open(path, "wb") as fh:
        writer.write(fh, m.astype(np.uint8))


def read_mask_png(path) -> np.ndarray:
    w, h, rows, info = png.Reader(filename=str(path)).read()
    if info["bitdepth"] != 1 or info["planes"] != 1:
        raise RasterFormatError(f"{path}: expected a 1-bit greyscale PNG")
    return np.vstack([np.asarray(r, dtype=np.uint8) for r in rows]).astype(bool)


def write_palette_png(path, indices, palette=INK_PALETTE) -> None:
    idx = np.asarray(indices, dtype=np.uint8)
    if idx.size and idx.max() >= len(palette):
        raise RasterFormatError(f"palette index {idx.max()} out of range")
    h, w = idx.shape
    writer = png.Writer(w, h, palette=palette, bitdepth=8)
    with open(path, "wb") as fh:
        writer.write(fh, idx)


def read_palette_png(path) -> np.ndarray:
    w, h, rows, info = png.Reader(filename=str(path)).read()
    if not info.get("palette"):
        raise RasterFormatError(f"{path}: not a palette PNG")
    return np.vstack([np.asarray(r, dtype=np.uint8) for r in rows])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
