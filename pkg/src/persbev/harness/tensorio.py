"""``PBEV`` tensor fixtures.

Layout: the 4 magic bytes ``PBEV``, a little-endian uint32 rank, ``rank``
little-endian uint32 dims, then the float32 little-endian payload in
row-major order (last dim contiguous).
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"PBEV"


def dumps_tensor(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f4")
    if any(n > 0xFFFFFFFF for n in arr.shape):
        raise FormatError(f"dimension too large for the fixture format: {arr.shape}")
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + arr.tobytes(order="C")


def loads_tensor(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if len(buf) < 8:
        raise FormatError("truncated header")
    (rank,) = struct.unpack_from("<I", buf, 4)
    header_len = 8 + 4 * rank
    if len(buf) < header_len:
        raise FormatError(f"truncated header: rank {rank} needs {header_len} bytes")
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    n = int(np.prod(dims, dtype=np.int64))
    payload = buf[header_len:]
    if len(payload) != 4 * n:
        raise FormatError(f"payload has {len(payload)} bytes, dims {dims} need {4 * n}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def save_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(dumps_tensor(arr))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return loads_tensor(fh.read())
