"""Binary tensor checkpoints.

Layout (little-endian): b"EPPN", u32 version=1, u32 tensor_count, then per
tensor: u16 name_len, UTF-8 name, u8 rank, u32 dims[rank], f32 data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"EPPN"
VERSION = 1


def dumps(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} cannot be stored")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise FormatError("not an EPPN checkpoint")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) * 4
            if off + size > len(buf):
                raise FormatError(f"tensor {name!r} truncated")
            out[name] = np.frombuffer(buf, dtype="<f4", count=size // 4, offset=off).reshape(dims).copy()
            off += size
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes in checkpoint")
    return out


def save(path, tensors: dict) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict:
    return loads(Path(path).read_bytes())
