"""Identity-labeled embedding storage, per-identity means, and exact K-NN.

The gallery is the set of enrolled walks. A snapshot is immutable once built:
adding a record returns a new snapshot. Nearest-neighbor queries are exact
(brute force over the gallery matrix) with deterministic tie-breaking by
ascending (id, walk), so results never depend on record insertion order.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError, GalleryError
from .fileio import atomic_write_text


def _as_vector(values, context: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataFormatError(f"{context}: embedding must be a non-empty flat vector")
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{context}: embedding contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One walk's embedding vector plus its identity and walk labels."""

    id: str
    walk: str
    vec: np.ndarray
    meta: dict | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.id, self.walk)


def make_record(id: str, walk: str, vec, meta: dict | None = None) -> EmbeddingRecord:
    if not isinstance(id, str) or not id:
        raise DataFormatError("record id must be a non-empty string")
    if not isinstance(walk, str) or not walk:
        raise DataFormatError("record walk must be a non-empty string")
    return EmbeddingRecord(id=id, walk=walk, vec=_as_vector(vec, f"record ({id},{walk})"), meta=meta)


_ALLOWED_KEYS = {"id", "walk", "vec", "meta"}


def load_embeddings(path: str | Path) -> list[EmbeddingRecord]:
    """Read a JSON Lines embedding file; validates format, dimension, uniqueness."""
    records: list[EmbeddingRecord] = []
    seen: set[tuple[str, str]] = set()
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() == "":
                raise DataFormatError(f"{path}:{lineno}: blank line in embedding file")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataFormatError(f"{path}:{lineno}: expected a JSON object")
            unknown = set(obj) - _ALLOWED_KEYS
            if unknown:
                raise DataFormatError(
                    f"{path}:{lineno}: unknown keys {sorted(unknown)}"
                )
            for required in ("id", "walk", "vec"):
                if required not in obj:
                    raise DataFormatError(f"{path}:{lineno}: missing key '{required}'")
            if not isinstance(obj["vec"], list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in obj["vec"]
            ):
                raise DataFormatError(f"{path}:{lineno}: 'vec' must be a list of numbers")
            meta = obj.get("meta")
            if meta is not None and not isinstance(meta, dict):
                raise DataFormatError(f"{path}:{lineno}: 'meta' must be an object")
            try:
                rec = make_record(obj["id"], obj["walk"], obj["vec"], meta)
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if dim is None:
                dim = rec.vec.size
            elif rec.vec.size != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: vector has dimension {rec.vec.size}, expected {dim}"
                )
            if rec.key in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate (id, walk) {rec.key}")
            seen.add(rec.key)
            records.append(rec)
    return records


def dump_embeddings(records: Iterable[EmbeddingRecord]) -> str:
    lines = []
    for rec in records:
        obj = {"id": rec.id, "walk": rec.walk, "vec": [float(v) for v in rec.vec]}
        if rec.meta is not None:
            obj["meta"] = rec.meta
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n" if lines else ""


def save_embeddings(path: str | Path, records: Iterable[EmbeddingRecord]) -> None:
    atomic_write_text(path, dump_embeddings(records))


@dataclass(frozen=True, eq=False)
class GallerySnapshot:
    """Immutable indexed gallery with per-identity mean vectors."""

    records: tuple[EmbeddingRecord, ...]
    means: dict[str, np.ndarray]
    dim: int
    matrix: np.ndarray = field(repr=False)
    index: dict[tuple[str, str], int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def identities(self) -> set[str]:
        return set(self.means)

    @property
    def mean_vector_norm(self) -> float:
        """Mean L2 norm over all gallery vectors (augmentation noise reference)."""
        return float(np.linalg.norm(self.matrix, axis=1).mean())


def _mean_of(vecs: Sequence[np.ndarray]) -> np.ndarray:
    m = np.mean(np.stack(vecs), axis=0)
    m.setflags(write=False)
    return m


def build_snapshot(records: Sequence[EmbeddingRecord]) -> GallerySnapshot:
    """Build an immutable snapshot; record order is preserved as given."""
    if not records:
        raise GalleryError("cannot build a snapshot from an empty record list")
    dim = records[0].vec.size
    index: dict[tuple[str, str], int] = {}
    by_id: dict[str, list[np.ndarray]] = {}
    for pos, rec in enumerate(records):
        if rec.vec.size != dim:
            raise GalleryError(
                f"record {rec.key} has dimension {rec.vec.size}, expected {dim}"
            )
        if rec.key in index:
            raise GalleryError(f"duplicate (id, walk) {rec.key}")
        index[rec.key] = pos
        by_id.setdefault(rec.id, []).append(rec.vec)
    means = {gid: _mean_of(vecs) for gid, vecs in by_id.items()}
    matrix = np.stack([rec.vec for rec in records])
    matrix.setflags(write=False)
    return GallerySnapshot(
        records=tuple(records), means=means, dim=dim, matrix=matrix, index=index
    )


def add_record(snapshot: GallerySnapshot, record: EmbeddingRecord) -> GallerySnapshot:
    """Return a new snapshot with the record appended; the input is unchanged."""
    if record.vec.size != snapshot.dim:
        raise GalleryError(
            f"record {record.key} has dimension {record.vec.size}, expected {snapshot.dim}"
        )
    if record.key in snapshot.index:
        raise GalleryError(f"duplicate (id, walk) {record.key}")
    records = snapshot.records + (record,)
    means = dict(snapshot.means)
    vecs = [r.vec for r in records if r.id == record.id]
    means[record.id] = _mean_of(vecs)
    matrix = np.vstack([snapshot.matrix, record.vec[None, :]])
    matrix.setflags(write=False)
    index = dict(snapshot.index)
    index[record.key] = len(snapshot.records)
    return GallerySnapshot(
        records=records, means=means, dim=snapshot.dim, matrix=matrix, index=index
    )


@dataclass(frozen=True)
class NeighborSet:
    """Exactly K (record, distance) pairs sorted by ascending distance."""

    entries: tuple[tuple[EmbeddingRecord, float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def records(self) -> tuple[EmbeddingRecord, ...]:
        return tuple(rec for rec, _ in self.entries)

    @property
    def distances(self) -> tuple[float, ...]:
        return tuple(d for _, d in self.entries)


def knn(snapshot: GallerySnapshot, probe_vec: np.ndarray, k: int) -> NeighborSet:
    """Exact Euclidean K nearest neighbors; ties broken by ascending (id, walk)."""
    if k <= 0:
        raise GalleryError(f"k must be positive, got {k}")
    n = len(snapshot.records)
    if k > n:
        raise GalleryError(f"k={k} exceeds gallery size {n}")
    probe = np.asarray(probe_vec, dtype=np.float64)
    if probe.shape != (snapshot.dim,):
        raise GalleryError(
            f"probe has shape {probe.shape}, expected ({snapshot.dim},)"
        )
    diff = snapshot.matrix - probe
    d2 = np.einsum("ij,ij->i", diff, diff)
    chosen = heapq.nsmallest(
        k,
        range(n),
        key=lambda i: (d2[i], snapshot.records[i].id, snapshot.records[i].walk),
    )
    entries = tuple(
        (snapshot.records[i], math.sqrt(float(d2[i]))) for i in chosen
    )
    return NeighborSet(entries=entries)
