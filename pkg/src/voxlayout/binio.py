"""Little-endian binary file helpers: magic headers, version bytes, RLE runs.

All on-disk formats in this package share the same envelope: a 4-byte ASCII
magic, a single version byte, then format-specific payload, everything
little-endian.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import ParseError

FORMAT_VERSION = 1


def write_magic(fh: BinaryIO, magic: str) -> None:
    fh.write(magic.encode("ascii"))
    fh.write(struct.pack("<B", FORMAT_VERSION))


def read_magic(fh: BinaryIO, magic: str, path: str = "") -> int:
    got = fh.read(4)
    if got != magic.encode("ascii"):
        raise ParseError(f"bad magic {got!r}, expected {magic!r}", path)
    (version,) = struct.unpack("<B", fh.read(1))
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", path)
    return version


def write_u32(fh: BinaryIO, *values: int) -> None:
    fh.write(struct.pack(f"<{len(values)}I", *values))


def read_u32(fh: BinaryIO, count: int = 1) -> tuple[int, ...]:
    return struct.unpack(f"<{count}I", fh.read(4 * count))


def write_f32(fh: BinaryIO, values) -> None:
    arr = np.asarray(values, dtype="<f4")
    fh.write(arr.tobytes())


def read_f32(fh: BinaryIO, count: int) -> np.ndarray:
    return np.frombuffer(fh.read(4 * count), dtype="<f4").copy()


def write_f64(fh: BinaryIO, values) -> None:
    arr = np.asarray(values, dtype="<f8")
    fh.write(arr.tobytes())


def read_f64(fh: BinaryIO, count: int) -> np.ndarray:
    return np.frombuffer(fh.read(8 * count), dtype="<f8").copy()


def rle_encode(values: np.ndarray) -> list[tuple[int, int]]:
    """Run-length encode a 1-D integer array into (count, value) pairs."""
    values = np.asarray(values).ravel()
    if values.size == 0:
        return []
    change = np.flatnonzero(values[1:] != values[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [values.size]))
    return [(int(e - s), int(values[s])) for s, e in zip(starts, ends)]


def rle_decode(runs: list[tuple[int, int]], dtype=np.int32) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=dtype)
    counts = np.array([c for c, _ in runs], dtype=np.int64)
    vals = np.array([v for _, v in runs], dtype=dtype)
    return np.repeat(vals, counts)


def rle_encode_pairs(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int, int]]:
    """RLE over aligned (a, b) pairs; a run breaks when either stream changes."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise ValueError("paired arrays must have equal length")
    if a.size == 0:
        return []
    diff = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    change = np.flatnonzero(diff) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [a.size]))
    return [(int(e - s), int(a[s]), int(b[s])) for s, e in zip(starts, ends)]


def write_rle_pairs(fh: BinaryIO, runs: list[tuple[int, int, int]]) -> None:
    write_u32(fh, len(runs))
    for count, a, b in runs:
        fh.write(struct.pack("<Iii", count, a, b))


def read_rle_pairs(fh: BinaryIO) -> list[tuple[int, int, int]]:
    (n,) = read_u32(fh)
    runs = []
    for _ in range(n):
        count, a, b = struct.unpack("<Iii", fh.read(12))
        runs.append((count, a, b))
    return runs
