"""Parameter checkpoint container.

Layout: magic bytes "PDML0001", then one record per entry:
    u32 name length (little-endian), UTF-8 name, u32 rank, u32 extents
    (one per axis), float32 little-endian data in row-major order.

String metadata (e.g. the modality a model was trained on) rides along as
rank-0 records whose name encodes "meta:<key>=<value>" and which carry no
data bytes; the base format round-trips them bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import InputError

MAGIC = b"PDML0001"
_META_PREFIX = "meta:"


def save_checkpoint(path, params, meta: Optional[Mapping[str, str]] = None) -> None:
    """Write parameters (ParamSet or name->array mapping) plus metadata."""
    if hasattr(params, "items") and not isinstance(params, dict):
        items = [(name, t.data) for name, t in params.items()]
    else:
        items = list(params.items())
    with open(path, "wb") as f:
        f.write(MAGIC)
        for key in sorted(meta or {}):
            value = (meta or {})[key]
            if "=" in key:
                raise InputError(f"metadata key may not contain '=': {key!r}")
            _write_name(f, f"{_META_PREFIX}{key}={value}")
            f.write(struct.pack("<I", 0))
        for name, arr in items:
            arr = np.ascontiguousarray(arr)
            if arr.dtype != np.float32:
                arr = arr.astype(np.float32)
            _write_name(f, name)
            f.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                f.write(struct.pack("<I", extent))
            f.write(arr.astype("<f4", copy=False).tobytes())


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    """Read a checkpoint; returns (name -> float32 array, metadata)."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise InputError(f"bad checkpoint magic in {path}: {blob[:8]!r}")
    pos = 8
    arrays: Dict[str, np.ndarray] = {}
    meta: Dict[str, str] = {}
    while pos < len(blob):
        name, pos = _read_name(blob, pos)
        (rank,), pos = struct.unpack_from("<I", blob, pos), pos + 4
        if rank == 0:
            if not name.startswith(_META_PREFIX) or "=" not in name:
                raise InputError(f"malformed rank-0 metadata entry {name!r}")
            key, value = name[len(_META_PREFIX):].split("=", 1)
            meta[key] = value
            continue
        extents = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(extents))
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
        pos += 4 * count
        arrays[name] = np.ascontiguousarray(data.reshape(extents)).astype(np.float32)
    return arrays, meta


def _write_name(f, name: str) -> None:
    raw = name.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_name(blob: bytes, pos: int) -> Tuple[str, int]:
    (n,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    name = blob[pos:pos + n].decode("utf-8")
    return name, pos + n
