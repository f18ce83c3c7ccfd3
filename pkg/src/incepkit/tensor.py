"""Tensor validation and the TBIN v1 binary format.

Tensors are plain ``numpy.ndarray`` objects. Activations are NHWC, convolution
weights are ``[Kh, Kw, Cin, Cout]``.

TBIN v1 layout (little endian)::

    b"TNSR" | u32 version=1 | u8 dtype (1=f32, 2=f64) | u8 rank | rank x u64 dims | payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ShapeError

MAGIC = b"TNSR"
VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
CODE_DTYPES = {code: dt for dt, code in DTYPE_CODES.items()}
ALLOWED_RANKS = (1, 2, 4)


def check_tensor(x, name="tensor"):
    """Return ``x`` as a contiguous float array after checking the invariants."""
    arr = np.asarray(x)
    if arr.dtype not in DTYPE_CODES:
        raise ShapeError(f"{name}: unsupported dtype {arr.dtype}")
    if arr.ndim not in ALLOWED_RANKS:
        raise ShapeError(f"{name}: rank {arr.ndim} not in {ALLOWED_RANKS}")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"{name}: non-positive dimension in {arr.shape}")
    return np.ascontiguousarray(arr)


def encode_tbin(x) -> bytes:
    arr = check_tensor(x)
    header = MAGIC + struct.pack("<IBB", VERSION, DTYPE_CODES[arr.dtype], arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")


def decode_tbin(buf: bytes) -> np.ndarray:
    if len(buf) < 10 or buf[:4] != MAGIC:
        raise ValueError("not a TBIN file (bad magic)")
    version, code, rank = struct.unpack_from("<IBB", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported TBIN version {version}")
    if code not in CODE_DTYPES:
        raise ValueError(f"unknown TBIN dtype code {code}")
    if rank not in ALLOWED_RANKS:
        raise ValueError(f"unsupported TBIN rank {rank}")
    offset = 10
    dims = struct.unpack_from(f"<{rank}Q", buf, offset)
    offset += 8 * rank
    dtype = CODE_DTYPES[code].newbyteorder("<")
    count = int(np.prod(dims))
    expected = offset + count * dtype.itemsize
    if len(buf) != expected:
        raise ValueError(f"TBIN payload size mismatch: {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return data.astype(CODE_DTYPES[code]).reshape(dims)


def write_tbin(path, x) -> None:
    Path(path).write_bytes(encode_tbin(x))


def read_tbin(path) -> np.ndarray:
    return decode_tbin(Path(path).read_bytes())
