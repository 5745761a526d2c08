"""PNG and FMOA array I/O.

FMOA layout: the 4 magic bytes ``FMOA``, a little-endian u32 rank, ``rank``
little-endian u32 dims, then the row-major little-endian float32 payload.
"""
from __future__ import annotations

import json
import os
import struct

import cv2
import numpy as np

MAGIC = b"FMOA"


class FmoaError(ValueError):
    pass


def write_fmoa(path, array) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_fmoa(path) -> np.ndarray:
    """Read an FMOA file into a float64 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FmoaError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise FmoaError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank > 8 or len(blob) < 8 + 4 * rank:
        raise FmoaError(f"{path}: implausible rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) - offset != 4 * count:
        raise FmoaError(
            f"{path}: payload has {len(blob) - offset} bytes, dims {dims} need {4 * count}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return data.reshape(dims).astype(np.float64)


def read_png(path) -> np.ndarray:
    """Load an 8- or 16-bit PNG as float64 in [0, 1]; colour comes back RGB."""
    img = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise OSError(f"cannot read image {path}")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float64) / scale
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., [2, 1, 0, 3]]
        else:
            img = img[..., ::-1]
    return np.ascontiguousarray(img)


def quantize(img: np.ndarray, bits: int = 16) -> np.ndarray:
    """Round to the grid a PNG of the given depth can hold."""
    top = (1 << bits) - 1
    return np.round(np.clip(img, 0.0, 1.0) * top) / top


def write_png(path, img: np.ndarray, bits: int = 16) -> None:
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    top = (1 << bits) - 1
    dtype = np.uint16 if bits == 16 else np.uint8
    data = np.round(np.clip(img, 0.0, 1.0) * top).astype(dtype)
    if data.ndim == 3:
        if data.shape[2] == 1:
            data = data[..., 0]
        elif data.shape[2] == 4:
            data = data[..., [2, 1, 0, 3]]
        else:
            data = data[..., ::-1]
    if not cv2.imwrite(os.fspath(path), np.ascontiguousarray(data)):
        raise OSError(f"cannot write image {path}")


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
