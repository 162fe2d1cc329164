"""AMCD binary dataset files, stratified splits, batching and burst truncation.

File layout (all little-endian)::

    b"AMCD" | u32 version=1 | u32 n_frames | u32 frame_len | u32 n_classes | u32 n_snrs
    n_classes x (u16 byte length, UTF-8 class name)
    n_frames  x (u16 label, i16 snr_db, frame_len x 2 binary32 interleaved I, Q)
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import modem
from .autodiff.tensor import Tensor

MAGIC = b"AMCD"
VERSION = 1
_HEADER = struct.Struct("<4s5I")


class FormatError(ValueError):
    """Malformed dataset or checkpoint file."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class Dataset:
    iq: np.ndarray  # (N, T, 2) float32
    labels: np.ndarray  # (N,) int64
    snrs: np.ndarray  # (N,) int64
    class_names: List[str]
    groups: Optional[List[str]] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.iq = np.asarray(self.iq, dtype=np.float32)
        if self.iq.ndim != 3 or self.iq.shape[-1] != 2:
            if self.iq.size == 0:
                self.iq = self.iq.reshape(0, self.iq.shape[1] if self.iq.ndim == 3 else 0, 2)
            else:
                raise ValueError(f"iq must be (N, T, 2), got {self.iq.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.snrs = np.asarray(self.snrs, dtype=np.int64).reshape(-1)
        if not (len(self.iq) == len(self.labels) == len(self.snrs)):
            raise ValueError("iq, labels and snrs lengths differ")
        if len(self.labels) and self.labels.max() >= len(self.class_names):
            raise ValueError("label exceeds the class-name table")
        if self.groups is None:
            self.groups = [modem.GROUP_OF.get(n, "") for n in self.class_names]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def frame_len(self) -> int:
        return self.iq.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def snr_values(self) -> List[int]:
        return sorted(set(int(s) for s in self.snrs))

    def subset(self, index: np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.iq[index], self.labels[index], self.snrs[index], list(self.class_names), list(self.groups), dict(self.meta))

    def frame(self, i: int) -> modem.Frame:
        return modem.Frame(self.iq[i], int(self.labels[i]), int(self.snrs[i]))

    def frames(self) -> Iterator[modem.Frame]:
        for i in range(len(self)):
            yield self.frame(i)

    @classmethod
    def from_frames(cls, frames: Sequence[modem.Frame], class_names: Sequence[str], frame_len: Optional[int] = None) -> "Dataset":
        if not frames:
            return cls(np.zeros((0, frame_len or 0, 2), np.float32), [], [], list(class_names))
        lengths = {f.length for f in frames}
        if len(lengths) != 1:
            raise ValueError(f"frames have inconsistent lengths: {sorted(lengths)}")
        return cls(
            np.stack([f.iq for f in frames]),
            [f.label for f in frames],
            [int(f.snr_db) for f in frames],
            list(class_names),
        )


def _record_dtype(frame_len: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("snr", "<i2"), ("iq", "<f4", (frame_len, 2))])


def write_dataset(ds: Dataset, path, manifest: Optional[dict] = None) -> Path:
    """Write ``ds`` as an AMCD file plus a ``<file>.manifest.json`` sidecar."""
    path = Path(path)
    if len(ds) and (ds.labels.min() < 0 or ds.labels.max() > 0xFFFF):
        raise ValueError("labels must fit in u16")
    if len(ds) and (ds.snrs.min() < -32768 or ds.snrs.max() > 32767):
        raise ValueError("snr values must fit in i16")
    names = b"".join(struct.pack("<H", len(n.encode())) + n.encode() for n in ds.class_names)
    rec = np.empty(len(ds), dtype=_record_dtype(ds.frame_len))
    rec["label"] = ds.labels
    rec["snr"] = ds.snrs
    rec["iq"] = ds.iq
    header = _HEADER.pack(MAGIC, VERSION, len(ds), ds.frame_len, ds.n_classes, len(ds.snr_values))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(names)
            fh.write(rec.tobytes())
        side = {
            "class_names": list(ds.class_names),
            "groups": list(ds.groups),
            "snr_values": ds.snr_values,
            "n_frames": len(ds),
            "frame_len": ds.frame_len,
            **(manifest if manifest is not None else ds.meta),
        }
        Path(str(path) + ".manifest.json").write_text(json.dumps(side, indent=2, sort_keys=True))
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", len(buf))
    magic, version, n_frames, frame_len, n_classes, _n_snrs = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    pos = _HEADER.size
    names = []
    for _ in range(n_classes):
        if pos + 2 > len(buf):
            raise FormatError("truncated class-name table", pos)
        (size,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + size > len(buf):
            raise FormatError("truncated class name", pos)
        names.append(buf[pos : pos + size].decode("utf-8"))
        pos += size
    dtype = _record_dtype(frame_len)
    need = n_frames * dtype.itemsize
    if len(buf) - pos < need:
        raise FormatError(f"expected {n_frames} records of {dtype.itemsize} bytes", pos + (len(buf) - pos) // dtype.itemsize * dtype.itemsize)
    if len(buf) - pos > need:
        raise FormatError("trailing bytes after last record", pos + need)
    rec = np.frombuffer(buf, dtype=dtype, count=n_frames, offset=pos)
    if n_frames and rec["label"].max() >= n_classes:
        raise FormatError("label exceeds class count", pos)
    meta, groups = {}, None
    side = Path(str(path) + ".manifest.json")
    if side.exists():
        meta = json.loads(side.read_text())
        groups = meta.get("groups")
    iq = rec["iq"].astype(np.float32) if n_frames else np.zeros((0, frame_len, 2), np.float32)
    return Dataset(iq, rec["label"].astype(np.int64), rec["snr"].astype(np.int64), names, groups, meta)


def synth_dataset(schemes: Sequence[str], cfg: modem.ChannelConfig, path=None) -> Dataset:
    """Generate a stratified synthetic dataset and optionally write it to ``path``."""
    iq, labels, snrs = modem.synth_arrays(schemes, cfg)
    meta = {"generator": {**asdict(cfg), "snr_grid": list(cfg.snr_grid), "schemes": list(schemes),
                          "sps": modem.SPS, "rolloff": modem.ROLLOFF, "span": modem.SPAN, "gmsk_bt": modem.GMSK_BT}}
    ds = Dataset(iq, labels, snrs, list(schemes), modem.groups_for(schemes), meta)
    if path is not None:
        write_dataset(ds, path)
    return ds


@dataclass
class SplitSpec:
    test_fraction: float = 0.5
    seed: int = 0


def _largest_remainder(sizes: np.ndarray, fraction: float) -> np.ndarray:
    ideal = sizes * fraction
    take = np.floor(ideal).astype(np.int64)
    short = int(round(sizes.sum() * fraction)) - int(take.sum())
    if short > 0:
        order = np.argsort(-(ideal - take), kind="stable")
        take[order[:short]] += 1
    # every stratum keeps at least one frame on each side
    return np.clip(take, 1, sizes - 1)


def stratified_split(ds: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """Split per (class, snr) stratum; returns ``(train, test)`` in file order."""
    if not 0.0 < spec.test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    train_idx, test_idx = stratified_indices(ds.labels, ds.snrs, spec)
    return ds.subset(train_idx), ds.subset(test_idx)


def stratified_indices(labels: np.ndarray, snrs: np.ndarray, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    keys = np.stack([labels, snrs], axis=1)
    strata, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sizes = np.bincount(inverse, minlength=len(strata))
    small = np.flatnonzero(sizes < 2)
    if small.size:
        c, s = strata[small[0]]
        raise ValueError(f"stratum (class={c}, snr={s}) has {sizes[small[0]]} frame(s); need >= 2")
    n_test = _largest_remainder(sizes, spec.test_fraction)
    rng = np.random.default_rng(spec.seed)
    test = []
    for k in range(len(strata)):
        members = np.flatnonzero(inverse == k)
        test.append(rng.permutation(members)[: n_test[k]])
    test_idx = np.sort(np.concatenate(test)) if test else np.zeros(0, np.int64)
    mask = np.ones(len(labels), dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def truncate_burst(frame: modem.Frame, n: int, rng: np.random.Generator) -> modem.Frame:
    """Contiguous ``n``-sample slice starting uniformly in ``0..T-n``."""
    t = frame.length
    if not 1 <= n <= t:
        raise ValueError(f"burst length must lie in 1..{t}, got {n}")
    s = int(rng.integers(0, t - n + 1))
    return modem.Frame(frame.iq[s : s + n], frame.label, frame.snr_db)


def truncate_dataset(ds: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Apply :func:`truncate_burst` to every frame with independent start draws."""
    t = ds.frame_len
    if not 1 <= n <= t:
        raise ValueError(f"burst length must lie in 1..{t}, got {n}")
    starts = rng.integers(0, t - n + 1, size=len(ds))
    idx = starts[:, None] + np.arange(n)[None, :]
    iq = np.take_along_axis(ds.iq, idx[:, :, None], axis=1)
    return Dataset(iq, ds.labels.copy(), ds.snrs.copy(), list(ds.class_names), list(ds.groups), dict(ds.meta))


def batch_iter(ds: Dataset, batch_size: int = 32, shuffle: bool = False, seed: int = 0):
    """Yield ``(Tensor[B, T, 2], labels, snrs)``; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(ds)) if shuffle else np.arange(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start : start + batch_size]
        yield Tensor(ds.iq[idx]), ds.labels[idx], ds.snrs[idx]
