"""Binary tensor container and IDX reader.

Layout (little-endian): b"DSTP", u32 version (=1), u8 dtype code, u32 ndim,
ndim x u32 dims, then the row-major payload.
"""

from __future__ import annotations

import gzip
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"DSTP"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1"), 4: np.dtype("<i4")}
CODES = {np.dtype(v).newbyteorder("="): k for k, v in DTYPES.items()}


class TensorFileError(ValueError):
    pass


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    code = CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise TensorFileError(f"unsupported dtype {arr.dtype}; use float32, float64, uint8 or int32")
    if any(n >= 2**32 for n in arr.shape):
        raise TensorFileError("dimension too large for u32")
    header = MAGIC + struct.pack("<IBI", VERSION, code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 13 or buf[:4] != MAGIC:
        raise TensorFileError("not a DSTP tensor file")
    version, code, ndim = struct.unpack_from("<IBI", buf, 4)
    if version != VERSION:
        raise TensorFileError(f"unsupported tensor file version {version}")
    if code not in DTYPES:
        raise TensorFileError(f"unknown dtype code {code}")
    off = 13
    if len(buf) < off + 4 * ndim:
        raise TensorFileError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", buf, off)
    off += 4 * ndim
    dt = DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(buf) - off != expected:
        raise TensorFileError(f"payload is {len(buf) - off} bytes, header implies {expected}")
    return np.frombuffer(buf, dtype=dt, offset=off).reshape(dims).astype(dt.newbyteorder("="))


def write_tensor(path, arr: np.ndarray) -> None:
    atomic_write(path, encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path) -> np.ndarray:
    """Read an IDX file (MNIST-style external image datasets); .gz is accepted."""
    path = Path(path)
    raw = gzip.decompress(path.read_bytes()) if path.suffix == ".gz" else path.read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise TensorFileError(f"{path} is not an IDX file")
    ndim = raw[3]
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    dt = np.dtype(_IDX_TYPES[raw[2]])
    data = np.frombuffer(raw, dtype=dt, offset=4 + 4 * ndim)
    if data.size != int(np.prod(dims, dtype=np.int64)):
        raise TensorFileError(f"{path}: payload size does not match header")
    return data.reshape(dims).astype(dt.newbyteorder("="))
