"""
Portable Tensor Files

Little-endian container used for weights, image sets and activation dumps:

    magic "TNNT" | u32 version | u32 rank | u64 dims[rank] | float32 data (row-major)
"""

import logging
import os
import struct

import numpy as np

from topobetti.errors import BadMagic, InvalidTensor, TruncatedFile

logger = logging.getLogger(__name__)

MAGIC = b"TNNT"
VERSION = 1


def encode_tensor(array: np.ndarray) -> bytes:
    data = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<II", VERSION, data.ndim) + struct.pack(f"<{data.ndim}Q", *data.shape)
    return header + data.tobytes(order="C")


def decode_tensor(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    if payload[:4] != MAGIC:
        raise BadMagic(f"{source}: not a tensor file (magic {payload[:4]!r})")
    if len(payload) < 12:
        raise TruncatedFile(f"{source}: header cut short")
    version, rank = struct.unpack_from("<II", payload, 4)
    if version != VERSION:
        raise InvalidTensor(f"{source}: unsupported tensor format version {version}")
    offset = 12 + 8 * rank
    if len(payload) < offset:
        raise TruncatedFile(f"{source}: dimension list cut short")
    dims = struct.unpack_from(f"<{rank}Q", payload, 12)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = offset + 4 * count
    if len(payload) < expected:
        raise TruncatedFile(f"{source}: expected {expected} bytes, found {len(payload)}")
    if len(payload) > expected:
        raise InvalidTensor(f"{source}: {len(payload) - expected} trailing bytes")
    return np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(dims).astype(np.float32)


def write_tensor(path: str, array: np.ndarray) -> None:
    """Write an array as float32 in the portable tensor format"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_tensor(array))
    logger.debug(f"Wrote tensor {tuple(np.shape(array))} to {path}")


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        payload = f.read()
    return decode_tensor(payload, source=path)
