"""Middlebury ".flo" container I/O.

Layout: float32 magic, int32 width, int32 height, then interleaved (u, v)
float32 pairs in row-major order, all little-endian. Optical flow uses the
standard 202021.25 magic; motion-boundary files reuse the container with the
magic replaced by 202021.5 to distinguish the content type.
"""

from pathlib import Path

import numpy as np

from .errors import InputError

FLOW_MAGIC = 202021.25
MB_MAGIC = 202021.5


def write_flo(path, u, v, magic: float = FLOW_MAGIC) -> None:
    u = np.asarray(u, dtype="<f4")
    v = np.asarray(v, dtype="<f4")
    if u.shape != v.shape or u.ndim != 2:
        raise InputError(f"u/v must be equal-shaped 2-D fields, got {u.shape} and {v.shape}")
    h, w = u.shape
    interleaved = np.empty((h, w, 2), dtype="<f4")
    interleaved[:, :, 0] = u
    interleaved[:, :, 1] = v
    with open(path, "wb") as f:
        f.write(np.float32(magic).astype("<f4").tobytes())
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(interleaved.tobytes())


def read_flo(path, expect_magic: float | None = None):
    """Read a .flo container; returns (u, v, magic)."""
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise InputError(f"truncated .flo file: {path}")
    magic = float(np.frombuffer(blob, dtype="<f4", count=1)[0])
    if expect_magic is not None and magic != np.float32(expect_magic):
        raise InputError(f"unexpected magic {magic} in {path}, wanted {expect_magic}")
    if magic not in (np.float32(FLOW_MAGIC), np.float32(MB_MAGIC)):
        raise InputError(f"unrecognized .flo magic {magic} in {path}")
    w, h = (int(x) for x in np.frombuffer(blob, dtype="<i4", count=2, offset=4))
    expected = 12 + 8 * w * h
    if len(blob) != expected:
        raise InputError(f"size mismatch in {path}: {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w, 2)
    return np.ascontiguousarray(data[:, :, 0]), np.ascontiguousarray(data[:, :, 1]), magic
