"""Binary parameter container shared by student and teacher checkpoints.

Layout (all integers little-endian)::

    b"GNC1"
    uint32  metadata length in bytes
    bytes   UTF-8 metadata, one ``key=value`` per line
    float64 parameter blocks, row-major, in the order listed under ``blocks``

The ``blocks`` metadata entry reads ``name:rowsxcols,name:rowsxcols,...``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from graphnc.errors import DatasetError

MAGIC = b"GNC1"


def save_checkpoint(path, blocks: dict, metadata: dict) -> None:
    """Write ``blocks`` (name -> 2-D array) in insertion order with ``metadata``."""
    meta = {k: str(v) for k, v in metadata.items()}
    shapes = []
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"block {name!r} must be 2-D")
        shapes.append(f"{name}:{arr.shape[0]}x{arr.shape[1]}")
    meta["blocks"] = ",".join(shapes)
    for k, v in meta.items():
        if "\n" in v or "=" in k:
            raise ValueError(f"metadata entry {k!r} cannot be encoded")
    text = "".join(f"{k}={v}\n" for k, v in meta.items()).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        for arr in blocks.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(blocks, metadata)`` as written by :func:`save_checkpoint`."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise DatasetError("not a GNC1 checkpoint (bad magic bytes)", path)
    (meta_len,) = struct.unpack("<I", data[4:8])
    meta = {}
    for line in data[8 : 8 + meta_len].decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        meta[key] = value
    offset = 8 + meta_len
    blocks = {}
    for spec in filter(None, meta.get("blocks", "").split(",")):
        name, _, shape = spec.partition(":")
        rows, cols = (int(t) for t in shape.split("x"))
        nbytes = rows * cols * 8
        if offset + nbytes > len(data):
            raise DatasetError(f"truncated checkpoint while reading block {name!r}", path)
        blocks[name] = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise DatasetError("trailing bytes after last parameter block", path)
    return blocks, meta
