"""Portable FloatMap (PFM) reading and writing.

The format: a text header of three tokens -- ``PF`` (colour) or ``Pf``
(grayscale), ``width height``, and a scale float whose *sign* encodes
endianness (negative = little-endian) -- followed by raw float32 rows
stored bottom-up.

We write little-endian (scale -1.0).  Reading accepts both endiannesses
and normalizes to a top-down [H, W, 3] (or [H, W]) float32 array.  Any
malformed header or short payload raises ParseError with the byte offset.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from wavehdr.errors import DimensionError, ParseError

_WS = b" \t\n\r\f\v"


def _read_token(buf: bytes, pos: int, origin: str) -> tuple[bytes, int]:
    """Next whitespace-delimited token and the offset just past it.

    PFM headers separate tokens with single whitespace characters; comments
    are not part of the spec so none are handled.
    """
    while pos < len(buf) and buf[pos:pos + 1] in (b" ", b"\t", b"\n", b"\r"):
        pos += 1
    if pos >= len(buf):
        raise ParseError(f"{origin}: header ended early", offset=pos)
    start = pos
    while pos < len(buf) and buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        pos += 1
    return buf[start:pos], pos


def load_pfm(path: str | Path) -> np.ndarray:
    """Load a PFM file as float32, top-down row order."""
    origin = str(path)
    with open(path, "rb") as f:
        buf = f.read()
    kind, pos = _read_token(buf, 0, origin)
    if kind not in (b"PF", b"Pf"):
        raise ParseError(f"{origin}: bad magic {kind!r} (want PF or Pf)", offset=0)
    channels = 3 if kind == b"PF" else 1

    wtok, pos = _read_token(buf, pos, origin)
    htok, pos = _read_token(buf, pos, origin)
    try:
        width, height = int(wtok), int(htok)
    except ValueError:
        raise ParseError(f"{origin}: non-integer dimensions {wtok!r} {htok!r}",
                         offset=pos) from None
    if width <= 0 or height <= 0:
        raise ParseError(f"{origin}: non-positive dimensions {width}x{height}",
                         offset=pos)

    stok, pos = _read_token(buf, pos, origin)
    try:
        scale = float(stok)
    except ValueError:
        raise ParseError(f"{origin}: bad scale token {stok!r}", offset=pos) from None
    if scale == 0.0:
        raise ParseError(f"{origin}: zero scale", offset=pos)
    # exactly one whitespace byte terminates the header
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise ParseError(f"{origin}: missing header terminator", offset=pos)
    pos += 1

    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    need = count * 4
    have = len(buf) - pos
    if have < need:
        raise ParseError(
            f"{origin}: payload has {have} bytes, expected {need}",
            offset=len(buf))
    if have > need:
        raise ParseError(
            f"{origin}: {have - need} trailing bytes after payload",
            offset=pos + need)
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    if channels == 3:
        img = data.reshape(height, width, 3)
    else:
        img = data.reshape(height, width)
    # rows are stored bottom-up
    img = img[::-1].astype(np.float32, copy=True)
    if abs(scale) != 1.0:
        img *= np.float32(abs(scale))
    return img


def save_pfm(path: str | Path, img: np.ndarray) -> None:
    """Write ``img`` ([H,W] or [H,W,3]) as a little-endian PFM."""
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        kind = b"PF"
    elif img.ndim == 2:
        kind = b"Pf"
    else:
        raise DimensionError(f"PFM wants [H,W] or [H,W,3], got {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise DimensionError(f"empty image {img.shape}")
    h, w = img.shape[0], img.shape[1]
    header = kind + b"\n" + f"{w} {h}".encode() + b"\n" + b"-1.0\n"
    payload = np.ascontiguousarray(img[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
