"""WTNS: a minimal binary tensor container.

Layout (all integers little-endian):

    bytes 0..3    magic b"WTNS"
    bytes 4..7    uint32 rank
    next rank*4   uint32 dims
    next 1        uint8 dtype code (0 = float32, 1 = float64)
    rest          payload, C-order, little-endian floats

Loading never silently truncates or pads: any mismatch between header and
payload raises :class:`~wavehdr.errors.ParseError` carrying the byte offset
where the problem was detected.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from wavehdr.errors import DimensionError, ParseError

MAGIC = b"WTNS"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
MAX_RANK = 32  # sanity bound; a corrupt rank field fails fast


def save_tensor(path: str | Path, arr: np.ndarray) -> None:
    """Write ``arr`` (float32/float64) to ``path`` in WTNS format."""
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise DimensionError(f"WTNS stores float32/float64 only, got {arr.dtype}")
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    header += struct.pack("<B", _DTYPE_CODES[arr.dtype])
    payload = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def _loads(buf: bytes, origin: str) -> np.ndarray:
    n = len(buf)
    if n < 4 or buf[:4] != MAGIC:
        raise ParseError(f"{origin}: bad magic (expected {MAGIC!r})", offset=0)
    if n < 8:
        raise ParseError(f"{origin}: truncated before rank field", offset=4)
    rank = struct.unpack_from("<I", buf, 4)[0]
    if rank > MAX_RANK:
        raise ParseError(f"{origin}: implausible rank {rank}", offset=4)
    dims_end = 8 + 4 * rank
    if n < dims_end:
        raise ParseError(f"{origin}: truncated inside dims", offset=n)
    dims = struct.unpack_from(f"<{rank}I", buf, 8) if rank else ()
    if n < dims_end + 1:
        raise ParseError(f"{origin}: truncated before dtype code", offset=dims_end)
    code = buf[dims_end]
    if code not in _CODE_DTYPES:
        raise ParseError(f"{origin}: unknown dtype code {code}", offset=dims_end)
    dtype = _CODE_DTYPES[code]
    start = dims_end + 1
    count = 1
    for d in dims:
        count *= d
    expected = count * dtype.itemsize
    actual = n - start
    if actual != expected:
        raise ParseError(
            f"{origin}: payload is {actual} bytes, header implies {expected}",
            offset=start)
    arr = np.frombuffer(buf[start:], dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def load_tensor(path: str | Path) -> np.ndarray:
    """Read a WTNS file; exact inverse of :func:`save_tensor`."""
    with open(path, "rb") as f:
        buf = f.read()
    return _loads(buf, origin=str(path))
