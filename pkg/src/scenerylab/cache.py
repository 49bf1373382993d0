"""Binary on-disk cache for discretized measures.

Layout (little-endian)::

    b"DYAD" | version u32 | dim u8 | level u32 | box 4 x f64 | count u64 | records

Each record is one i64 cell index per axis followed by the f64 mass.  A
1-D box is padded with two zeros.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .ifs import IfsSystem
from .measure import DyadicMeasure, discretize

MAGIC = b"DYAD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIBI4dQ")


class CacheFormatError(ValueError):
    pass


def _record_dtype(dim: int):
    return np.dtype([(f"i{a}", "<i8") for a in range(dim)] + [("mass", "<f8")])


def encode_measure(mu: DyadicMeasure, version: int = FORMAT_VERSION) -> bytes:
    box = [v for pair in mu.box for v in pair]
    if mu.dim == 1:
        box += [0.0, 0.0]
    header = _HEADER.pack(MAGIC, version, mu.dim, mu.level, *box, len(mu))
    rec = np.empty(len(mu), dtype=_record_dtype(mu.dim))
    idx = mu.index.reshape(len(mu), -1)
    for a in range(mu.dim):
        rec[f"i{a}"] = idx[:, a]
    rec["mass"] = mu.mass
    return header + rec.tobytes()


def decode_measure(data: bytes, version: int = FORMAT_VERSION) -> DyadicMeasure:
    if len(data) < _HEADER.size:
        raise CacheFormatError("truncated header")
    magic, ver, dim, level, b0, b1, b2, b3, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}")
    if ver != version:
        raise CacheFormatError(f"format version {ver}, expected {version}")
    if dim not in (1, 2):
        raise CacheFormatError(f"bad dimension {dim}")
    dt = _record_dtype(dim)
    body = data[_HEADER.size:]
    if len(body) != count * dt.itemsize:
        raise CacheFormatError("record count does not match the file size")
    rec = np.frombuffer(body, dtype=dt, count=count)
    if dim == 1:
        index, box = rec["i0"].astype(np.int64), (b0, b1)
    else:
        index, box = np.stack([rec["i0"], rec["i1"]], axis=1).astype(np.int64), ((b0, b1), (b2, b3))
    return DyadicMeasure(index, rec["mass"].astype(float), level, box)


def cache_key(system: IfsSystem, depth: int, version: int = FORMAT_VERSION, box=None) -> str:
    """Content hash of the system (maps and weights), depth, box and format version."""
    text = repr((system.key(), int(depth), None if box is None else repr(box), int(version)))
    return hashlib.sha256(text.encode()).hexdigest()


class MeasureCache:
    """Directory of ``<key>.dyad`` files."""

    def __init__(self, directory, version: int = FORMAT_VERSION):
        self.directory = Path(directory)
        self.version = version
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.dyad"

    def store(self, mu: DyadicMeasure, key: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        target = self.path(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(encode_measure(mu, self.version))
        os.replace(tmp, target)
        return target

    def load(self, key: str) -> DyadicMeasure | None:
        """The cached measure, or ``None`` on a miss (unreadable files warn and miss)."""
        p = self.path(key)
        if not p.exists():
            return None
        try:
            return decode_measure(p.read_bytes(), self.version)
        except (CacheFormatError, ValueError) as exc:
            warnings.warn(f"ignoring cache file {p.name}: {exc}", RuntimeWarning)
            return None

    def discretize(self, system: IfsSystem, depth: int, **kwargs) -> DyadicMeasure:
        key = cache_key(system, depth, self.version, kwargs.get("box"))
        mu = self.load(key)
        if mu is not None:
            self.hits += 1
            return mu
        self.misses += 1
        mu = discretize(system, depth, **kwargs)
        self.store(mu, key)
        return mu


def cache_measure(mu: DyadicMeasure, key: str, directory) -> Path:
    return MeasureCache(directory).store(mu, key)


def load_measure(key: str, directory) -> DyadicMeasure | None:
    return MeasureCache(directory).load(key)
