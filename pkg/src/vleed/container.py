"""Binary container shared by model checkpoints and baseline artifacts.

Layout (all integers little-endian)::

    magic            raw ASCII bytes (e.g. b"VLEED1")
    meta_len         u64
    meta             UTF-8 JSON, keys sorted
    repeated until EOF:
        name_len     u32
        name         UTF-8 bytes
        rank         u32
        dims         rank x u64
        values       prod(dims) x f64
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MODEL_MAGIC = b"VLEED1"
PROJECTION_MAGIC = b"VLEEDP1"
RANKING_MAGIC = b"VLEEDR1"


def dumps(magic: bytes, meta: dict, tensors) -> bytes:
    buf = io.BytesIO()
    buf.write(magic)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    for name, arr in tensors:
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated container: need {n} bytes at offset {pos}, "
                              f"have {len(data) - pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    found = take(len(magic))
    if found != magic:
        raise FormatError(f"bad magic {found!r}, expected {magic!r}")
    (meta_len,) = struct.unpack("<Q", take(8))
    try:
        meta = json.loads(take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata blob: {exc}") from exc
    tensors: dict[str, np.ndarray] = {}
    while pos < len(data):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        tensors[name] = values.reshape(dims)
    return meta, tensors


def save(path, magic: bytes, meta: dict, tensors) -> None:
    Path(path).write_bytes(dumps(magic, meta, tensors))


def load(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes(), magic)


def sniff(path) -> bytes | None:
    """Return whichever known magic the file starts with, or None."""
    head = Path(path).read_bytes()[:8]
    for magic in (PROJECTION_MAGIC, RANKING_MAGIC, MODEL_MAGIC):
        if head.startswith(magic):
            return magic
    return None
