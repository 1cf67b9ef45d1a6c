"""Synthetic face-embedding stand-in with planted identity and attribute structure.

Each identity ``i`` gets a random unit direction ``u_i`` and one attribute
label ``c``; each class ``c`` gets a fixed random unit direction ``a_c``.
A sample is ``normalize(identity_spread * u_i + attribute_strength * a_c
+ noise_scale * eps)`` with ``eps ~ N(0, I)``.

The on-disk store ("VLEEDE1") is little-endian::

    magic b"VLEEDE1" | version u32 | d u32 | count u64 | num_classes u32
    count x (sample_id u64, identity_id u64, label u32, d x f32)
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigError, FormatError
from .numgrad import make_rng

STORE_MAGIC = b"VLEEDE1"
STORE_VERSION = 1
_HEADER = struct.Struct("<IIQI")


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: int = Field(512, ge=2)
    num_identities: int = Field(200, ge=1)
    samples_per_identity: int = Field(10, ge=1)
    num_classes: int = Field(2, ge=2)
    class_proportions: tuple[float, ...] | None = None
    identity_spread: float = Field(1.0, gt=0)
    attribute_strength: float = Field(1.0, ge=0)
    noise_scale: float = Field(0.05, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_proportions(self):
        p = self.class_proportions
        if p is not None:
            if len(p) != self.num_classes:
                raise ValueError(f"{len(p)} class proportions for {self.num_classes} classes")
            if min(p) < 0 or abs(sum(p) - 1.0) > 1e-9:
                raise ValueError("class_proportions must be a probability vector")
        return self

    @property
    def proportions(self) -> np.ndarray:
        if self.class_proportions is None:
            return np.full(self.num_classes, 1.0 / self.num_classes)
        return np.asarray(self.class_proportions, dtype=np.float64)


# class balances of real evaluation splits, usable as generator presets
PRESETS = {
    "gender_vggface2_eval": SynthConfig(num_classes=2, class_proportions=(0.605, 0.395)),
    "gender_rfw": SynthConfig(num_classes=2, class_proportions=(0.755, 0.245)),
    "gender_ijbc": SynthConfig(num_classes=2, class_proportions=(0.630, 0.370)),
    "ethnicity_rfw": SynthConfig(num_classes=4,
                                 class_proportions=(0.256, 0.239, 0.251, 0.254)),
    "ethnicity_vggface2_eval": SynthConfig(num_classes=4,
                                           class_proportions=(0.068, 0.151, 0.696, 0.085)),
}


@dataclass
class EmbeddingStore:
    """Records held column-wise. Labels are 1-based."""

    dim: int
    num_classes: int
    sample_ids: np.ndarray
    identity_ids: np.ndarray
    labels: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.uint64)
        self.identity_ids = np.asarray(self.identity_ids, dtype=np.uint64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float64).reshape(-1, self.dim)
        n = len(self.sample_ids)
        if not (len(self.identity_ids) == len(self.labels) == len(self.vectors) == n):
            raise ConfigError("store columns have different lengths")
        if n and (self.labels.min() < 1 or self.labels.max() > self.num_classes):
            raise ConfigError(f"labels must lie in 1..{self.num_classes}")

    def __len__(self) -> int:
        return len(self.sample_ids)

    def subset(self, mask_or_index) -> "EmbeddingStore":
        return EmbeddingStore(self.dim, self.num_classes, self.sample_ids[mask_or_index],
                              self.identity_ids[mask_or_index], self.labels[mask_or_index],
                              self.vectors[mask_or_index])

    def with_vectors(self, vectors: np.ndarray) -> "EmbeddingStore":
        vectors = np.asarray(vectors, dtype=np.float64)
        return EmbeddingStore(vectors.shape[1], self.num_classes, self.sample_ids,
                              self.identity_ids, self.labels, vectors)

    def equals(self, other: "EmbeddingStore") -> bool:
        return (self.dim == other.dim and self.num_classes == other.num_classes
                and np.array_equal(self.sample_ids, other.sample_ids)
                and np.array_equal(self.identity_ids, other.identity_ids)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.vectors, other.vectors))


def _unit_rows(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def generate(config: SynthConfig, max_retries: int = 100) -> EmbeddingStore:
    rng = make_rng(config.seed)
    d, k = config.dim, config.num_classes
    class_dirs = _unit_rows(rng, k, d)
    centroids = config.identity_spread * _unit_rows(rng, config.num_identities, d)
    id_labels = rng.choice(k, size=config.num_identities, p=config.proportions) + 1
    spi = config.samples_per_identity
    identity_ids = np.repeat(np.arange(config.num_identities), spi)
    labels = id_labels[identity_ids]
    base = centroids[identity_ids] + config.attribute_strength * class_dirs[labels - 1]
    raw = base + config.noise_scale * rng.standard_normal(base.shape)
    norms = np.linalg.norm(raw, axis=1)
    for _ in range(max_retries):
        bad = np.flatnonzero(norms < 1e-9)
        if bad.size == 0:
            break
        raw[bad] = base[bad] + config.noise_scale * rng.standard_normal((bad.size, d))
        norms[bad] = np.linalg.norm(raw[bad], axis=1)
    else:
        raise ConfigError("generator keeps producing zero-norm samples; "
                          "adjust attribute_strength / identity_spread")
    return EmbeddingStore(d, k, np.arange(len(raw)), identity_ids, labels,
                          raw / norms[:, None])


def split(store: EmbeddingStore, train_fraction: float, seed: int):
    """Identity-disjoint ``(train, eval)`` partition."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    ids = np.unique(store.identity_ids)
    if len(ids) < 2:
        raise ConfigError("need at least two identities to split")
    n_train = int(np.clip(round(train_fraction * len(ids)), 1, len(ids) - 1))
    perm = make_rng(seed).permutation(ids)
    train_mask = np.isin(store.identity_ids, perm[:n_train])
    train, held = store.subset(train_mask), store.subset(~train_mask)
    for name, part in (("train", train), ("eval", held)):
        if len(np.unique(part.labels)) < 2:
            raise ConfigError(f"{name} split has fewer than two attribute classes")
    return train, held


@dataclass
class PairList:
    """Index pairs into a store.

    ``group`` is the shared attribute label when both sides carry the same
    label (every genuine pair, intra-group impostors) and 0 otherwise.
    """

    first: np.ndarray
    second: np.ndarray
    genuine: np.ndarray
    group: np.ndarray

    def __len__(self) -> int:
        return len(self.first)


def _genuine_candidates(identity_ids: np.ndarray) -> np.ndarray:
    out = []
    order = np.argsort(identity_ids, kind="stable")
    _, starts, counts = np.unique(identity_ids[order], return_index=True, return_counts=True)
    for s, c in zip(starts, counts):
        if c >= 2:
            members = np.sort(order[s:s + c])
            i, j = np.triu_indices(c, k=1)
            out.append(np.stack([members[i], members[j]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def make_pairs(store: EmbeddingStore, num_genuine: int, num_impostor: int,
               seed: int) -> PairList:
    ids = store.identity_ids
    n = len(store)
    genuine_all = _genuine_candidates(ids)
    if len(np.unique(ids)) < 2 or len(genuine_all) == 0:
        raise ConfigError("need >= 2 identities and one identity with >= 2 samples")
    impostor_total = n * (n - 1) // 2 - len(genuine_all)
    if num_genuine > len(genuine_all) or num_impostor > impostor_total:
        raise ConfigError(f"requested {num_genuine} genuine / {num_impostor} impostor pairs, "
                          f"available {len(genuine_all)} / {impostor_total}")
    rng = make_rng(seed)
    gen = genuine_all[rng.choice(len(genuine_all), size=num_genuine, replace=False)]

    if num_impostor * 2 > impostor_total:
        i, j = np.triu_indices(n, k=1)
        keep = ids[i] != ids[j]
        pool = np.stack([i[keep], j[keep]], axis=1)
        imp = pool[rng.choice(len(pool), size=num_impostor, replace=False)]
    else:
        seen: set[tuple[int, int]] = set()
        picked = []
        while len(picked) < num_impostor:
            a = rng.integers(0, n, 2 * (num_impostor - len(picked)) + 16)
            b = rng.integers(0, n, a.size)
            for x, y in zip(a.tolist(), b.tolist()):
                if ids[x] == ids[y]:
                    continue
                key = (x, y) if x < y else (y, x)
                if key in seen:
                    continue
                seen.add(key)
                picked.append(key)
                if len(picked) == num_impostor:
                    break
        imp = np.array(picked, dtype=np.int64).reshape(-1, 2)

    both = np.concatenate([gen, imp]).astype(np.int64)
    first, second = both[:, 0], both[:, 1]
    same = store.labels[first] == store.labels[second]
    return PairList(first, second,
                    np.concatenate([np.ones(len(gen), bool), np.zeros(len(imp), bool)]),
                    np.where(same, store.labels[first], 0))


# file formats

def _record_dtype(d: int) -> np.dtype:
    return np.dtype([("sample_id", "<u8"), ("identity_id", "<u8"), ("label", "<u4"),
                     ("vector", "<f4", (d,))])


def store_bytes(store: EmbeddingStore) -> bytes:
    rec = np.zeros(len(store), dtype=_record_dtype(store.dim))
    rec["sample_id"] = store.sample_ids
    rec["identity_id"] = store.identity_ids
    rec["label"] = store.labels
    rec["vector"] = store.vectors
    header = STORE_MAGIC + _HEADER.pack(STORE_VERSION, store.dim, len(store), store.num_classes)
    return header + rec.tobytes()


def save_store(store: EmbeddingStore, path) -> None:
    Path(path).write_bytes(store_bytes(store))


def parse_store(data: bytes) -> EmbeddingStore:
    if data[:len(STORE_MAGIC)] != STORE_MAGIC:
        raise FormatError(f"bad magic {data[:len(STORE_MAGIC)]!r}, expected {STORE_MAGIC!r}")
    start = len(STORE_MAGIC)
    if len(data) < start + _HEADER.size:
        raise FormatError(f"truncated header at byte offset {len(data)}")
    version, d, count, k = _HEADER.unpack_from(data, start)
    if version != STORE_VERSION:
        raise FormatError(f"unsupported store version {version}")
    offset = start + _HEADER.size
    dtype = _record_dtype(d)
    need = offset + count * dtype.itemsize
    if len(data) < need:
        full = (len(data) - offset) // dtype.itemsize
        raise FormatError(f"truncated store: record {full} incomplete at byte offset "
                          f"{offset + full * dtype.itemsize} (expected {need} bytes, "
                          f"got {len(data)})")
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    vectors = rec["vector"].astype(np.float64).reshape(count, d)
    if count:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        drift = np.abs(norms - 1.0) > 1e-6
        if np.any(drift):
            vectors = np.where(drift, vectors / np.where(norms > 0, norms, 1.0), vectors)
    try:
        return EmbeddingStore(d, k, rec["sample_id"], rec["identity_id"],
                              rec["label"].astype(np.int64), vectors)
    except ConfigError as exc:
        raise FormatError(str(exc)) from exc


def load_store(path) -> EmbeddingStore:
    return parse_store(Path(path).read_bytes())


def load_csv(path, num_classes: int | None = None) -> EmbeddingStore:
    """Read ``sample_id, identity_id, label, v0..v{d-1}`` rows (header required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["sample_id", "identity_id", "label"]:
            raise FormatError("CSV header must start with sample_id,identity_id,label")
        d = len(header) - 3
        if header[3:] != [f"v{i}" for i in range(d)]:
            raise FormatError("CSV vector columns must be v0..v{d-1}")
        rows = [r for r in reader if r]
    try:
        sid = np.array([int(r[0]) for r in rows], dtype=np.uint64)
        iid = np.array([int(r[1]) for r in rows], dtype=np.uint64)
        lab = np.array([int(r[2]) for r in rows], dtype=np.int64)
        vec = np.array([[float(v) for v in r[3:]] for r in rows], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed CSV row: {exc}") from exc
    vec = vec.reshape(len(rows), d)
    if len(rows):
        vec = vec / np.linalg.norm(vec, axis=1, keepdims=True)
    k = num_classes or (int(lab.max()) if len(lab) else 2)
    return EmbeddingStore(d, k, sid, iid, lab, vec)
