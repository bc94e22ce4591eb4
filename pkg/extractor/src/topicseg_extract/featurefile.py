"""Writer for the engine's binary feature format.

Contract (little-endian): magic "LSG1", u32 version=1, u32 n, u32 d,
then n*d IEEE-754 float32 row-major.  This module re-implements the
format from its specification; the conformance tests round-trip the
output through the engine's loader.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"LSG1"
VERSION = 1


def write_features(path, data: np.ndarray) -> None:
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected (n>=1, d>=1) matrix, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite features")
    n, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, n, d))
        fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def read_features(path) -> np.ndarray:
    """Reader used only for self-checks; the engine owns the canonical one."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, n, d = struct.unpack("<III", blob[4:16])
    if version != VERSION or len(blob) != 16 + 4 * n * d:
        raise ValueError(f"{path}: bad header or truncated payload")
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(n, d).astype(np.float64)
