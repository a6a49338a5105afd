"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic  b"CPDSDPCK"            8 bytes
    version                       uint32
    metadata length, metadata     uint64, UTF-8 JSON
    tensor count                  uint64
    per tensor: name length, name (UTF-8), ndim, shape[ndim] (uint64 each),
                row-major float64 payload
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"CPDSDPCK"
VERSION = 1


def dumps(tensors: dict, metadata: dict | None = None) -> bytes:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(meta)), meta,
             struct.pack("<Q", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(raw)) + raw)
        parts.append(struct.pack("<Q", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(blob: bytes):
    """Returns ``(tensors, metadata)``."""
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    (meta_len,) = take("<Q")
    metadata = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = take("<Q")
    tensors = {}
    for _ in range(count):
        (name_len,) = take("<Q")
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<Q")
        shape = take(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        if pos + 8 * size > len(blob):
            raise ValueError(f"truncated tensor {name!r}")
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(blob):
        raise ValueError("trailing bytes after last tensor")
    return tensors, metadata


def save(path, tensors: dict, metadata: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(tensors, metadata))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
