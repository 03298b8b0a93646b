"""TEN1 binary tensor files.

Layout: the magic bytes ``TEN1``, a little-endian ``uint32`` rank, ``rank``
little-endian ``uint64`` dimensions, then the row-major little-endian
``float64`` payload. Nothing follows the payload.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"TEN1"


class TensorFormatError(ValueError):
    pass


def _check(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d <= 0 for d in arr.shape):
        raise TensorFormatError(f"dimensions must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("tensor contains non-finite values")
    return arr


def to_bytes(arr) -> bytes:
    arr = _check(arr)
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr).tobytes(order="C")


def from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFormatError("missing TEN1 magic")
    (ndim,) = struct.unpack_from("<I", buf, 4)
    if ndim == 0:
        raise TensorFormatError("rank must be at least 1")
    head = 8 + 8 * ndim
    if len(buf) < head:
        raise TensorFormatError("truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 8)
    if any(d == 0 for d in shape):
        raise TensorFormatError(f"dimensions must be positive, got {shape}")
    count = int(np.prod(shape, dtype=object))
    if len(buf) - head != 8 * count:
        raise TensorFormatError(
            f"payload holds {(len(buf) - head) / 8:g} values, shape {shape} needs {count}")
    arr = np.frombuffer(buf, dtype="<f8", offset=head).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("tensor contains non-finite values")
    return arr.astype(float)


def write_tensor(arr, path) -> None:
    data = to_bytes(arr)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def read_tensor(path) -> np.ndarray:
    with open(os.fspath(path), "rb") as fh:
        return from_bytes(fh.read())
