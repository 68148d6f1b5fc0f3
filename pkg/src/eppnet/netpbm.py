"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def _header_tokens(buf: bytes, count: int):
    """Return the first ``count`` header tokens and the offset of the raster."""
    tokens, i, n = [], 0, len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError("truncated netpbm header")
        tokens.append(buf[start:i])
    if i >= n or not buf[i:i + 1].isspace():
        raise FormatError("missing whitespace after netpbm header")
    return tokens, i + 1


def decode(buf: bytes) -> np.ndarray:
    """Decode P5 to (H, W) uint8 or P6 to (H, W, 3) uint8."""
    tokens, offset = _header_tokens(buf, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer netpbm header field") from None
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise FormatError(f"unsupported geometry {width}x{height} maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    raster = buf[offset:offset + size]
    if len(raster) != size:
        raise FormatError(f"raster has {len(raster)} bytes, expected {size}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape((height, width, 3) if channels == 3 else (height, width)).copy()


def encode(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        if img.size and (img.min() < 0 or img.max() > 255):
            raise FormatError("pixel values outside 0..255")
        img = img.astype(np.uint8)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"cannot encode array of shape {img.shape}")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read_pgm(path) -> np.ndarray:
    img = decode(Path(path).read_bytes())
    if img.ndim != 2:
        raise FormatError(f"{path}: expected a P5 greymap")
    return img


def read_ppm(path) -> np.ndarray:
    img = decode(Path(path).read_bytes())
    if img.ndim != 3:
        raise FormatError(f"{path}: expected a P6 pixmap")
    return img


def write_pgm(path, img: np.ndarray) -> None:
    if np.asarray(img).ndim != 2:
        raise FormatError("PGM needs a 2-D array")
    Path(path).write_bytes(encode(img))


def write_ppm(path, img: np.ndarray) -> None:
    if np.asarray(img).ndim != 3:
        raise FormatError("PPM needs an (H, W, 3) array")
    Path(path).write_bytes(encode(img))
