"""Portable Float Map rasters and PNG previews."""

from __future__ import annotations

import re
import struct
import zlib
from pathlib import Path

import numpy as np

from .sensor import HdrImage


class PfmError(ValueError):
    pass


class PfmHeaderError(PfmError):
    pass


class PfmTruncatedError(PfmError):
    pass


class PfmEndiannessError(PfmError):
    pass


def write_pfm(path, img) -> None:
    """Write ``img`` as little-endian PFM (``Pf`` for one channel, ``PF`` for three)."""
    arr = img.data if isinstance(img, HdrImage) else np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if c not in (1, 3):
        raise ValueError(f"PFM holds 1 or 3 channels, got {c}")
    tag = "Pf" if c == 1 else "PF"
    payload = np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(f"{tag}\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(payload)


_HEADER = re.compile(rb"\A(P[Ff])\s+(\d+)\s+(\d+)\s+([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)\s")


def read_pfm_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = _HEADER.match(raw)
    if not m:
        raise PfmHeaderError(f"{path}: malformed PFM header")
    c = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    if scale == 0:
        raise PfmHeaderError(f"{path}: scale must be nonzero")
    if scale > 0:
        raise PfmEndiannessError(f"{path}: big-endian PFM (positive scale) is not supported")
    need = w * h * c * 4
    body = raw[m.end() : m.end() + need]
    if len(body) < need:
        raise PfmTruncatedError(f"{path}: expected {need} payload bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype="<f4").reshape(h, w, c)[::-1]
    return arr.astype(np.float64)


def read_pfm(path) -> HdrImage:
    return HdrImage(read_pfm_array(path))


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)


def quantize(raster, bit_depth: int = 8) -> np.ndarray:
    """Map ``[0, 1]`` to integer levels, rounding halves away from zero."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    arr = np.asarray(raster, dtype=np.float64)
    if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1:
        raise ValueError("preview values must lie in [0, 1]; tone-map first")
    return np.floor(arr * (2**bit_depth - 1) + 0.5).astype(np.uint16 if bit_depth == 16 else np.uint8)


def write_png_preview(path, raster, bit_depth: int = 8) -> None:
    """Write a grayscale or RGB PNG from a ``[0, 1]`` raster.

    Pillow cannot encode 16-bit RGB, so the (short) PNG container is written
    directly with zlib.
    """
    q = quantize(raster, bit_depth)
    if q.ndim == 3 and q.shape[2] == 1:
        q = q[:, :, 0]
    if q.ndim == 2:
        color_type = 0
    elif q.ndim == 3 and q.shape[2] == 3:
        color_type = 2
    else:
        raise ValueError(f"preview must be gray or RGB, got shape {q.shape}")
    h, w = q.shape[:2]
    rows = q.astype(">u2" if bit_depth == 16 else "u1").reshape(h, -1).tobytes()
    stride = len(rows) // h
    scan = b"".join(b"\x00" + rows[r * stride : (r + 1) * stride] for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, 0)
    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(_png_chunk(b"IHDR", ihdr))
        f.write(_png_chunk(b"IDAT", zlib.compress(scan, 9)))
        f.write(_png_chunk(b"IEND", b""))
