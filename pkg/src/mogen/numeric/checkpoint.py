"""Binary container for named float64 tensors.

Layout (all integers little-endian)::

    b"MGN1"
    u32  tensor count
    repeated:
        u32  name length, name bytes (utf-8)
        u32  ndim, ndim x u64 dims
        prod(dims) x f64 values, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MGN1"


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != MAGIC:
        raise CheckpointError("bad magic; not an MGN1 checkpoint")
    pos = 4

    def read(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (count,) = read("<I")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = read("<I")
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = read("<I")
        shape = read(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        if pos + 8 * size > len(buf):
            raise CheckpointError(f"truncated data for {name!r}")
        out[name] = np.reshape(np.frombuffer(buf, dtype="<f8", count=size, offset=pos).astype(np.float64), tuple(shape))
        pos += 8 * size
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def save(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
