"""Binary checkpoint container.

Layout: magic string "G2GCKPT1", then per tensor: name length (u32 LE),
UTF-8 name, rank (u32 LE), dims (u32 LE each), raw little-endian f64 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"G2GCKPT1"


def save_tensors(path, tensors: dict[str, np.ndarray]):
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: bad magic, not a checkpoint file")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"{path}: truncated checkpoint")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    while pos < len(data):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        payload = take(8 * count)
        out[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    return out
