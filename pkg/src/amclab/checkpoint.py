"""AMCW weight files.

Layout (little-endian)::

    b"AMCW" | u32 version=1 | u32 n_params
    per parameter: u16 name length | UTF-8 name | u32 rank | rank x u32 extents | binary32 data
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict

import numpy as np

from .dataset import FormatError

MAGIC = b"AMCW"
VERSION = 1


def encode_weights(state: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_weights(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    if len(buf) < 12:
        raise FormatError("truncated header", len(buf))
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0)
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    pos = 12
    state: "OrderedDict[str, np.ndarray]" = OrderedDict()

    def need(n: int, what: str) -> None:
        if pos + n > len(buf):
            raise FormatError(f"truncated {what}", pos)

    for _ in range(count):
        need(2, "name length")
        (size,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        need(size, "name")
        name = buf[pos : pos + size].decode("utf-8")
        pos += size
        need(4, "rank")
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(4 * rank, "extents")
        shape = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        need(4 * n, f"data of {name}")
        state[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * n
    if pos != len(buf):
        raise FormatError("trailing bytes after last parameter", pos)
    return state


def save_weights(model, path) -> Path:
    path = Path(path)
    path.write_bytes(encode_weights(model.state() if hasattr(model, "state") else model))
    return path


def load_weights(path) -> "OrderedDict[str, np.ndarray]":
    return decode_weights(Path(path).read_bytes())


def load_into(model, path) -> None:
    model.load_state(load_weights(path))
