"""Binary model checkpoints.

Layout: 8-byte ASCII magic "GENR0001", a little-endian uint32 length prefix,
a canonical-JSON metadata block (format version, model config, train-config
digest, ordered tensor manifest), then raw float64 little-endian row-major
payloads in manifest order. Save -> load round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError
from .fileio import atomic_write_bytes, canonical_json
from .model import EnrollModel, ModelConfig, parameter_manifest

MAGIC = b"GENR0001"
FORMAT_VERSION = 1


def checkpoint_bytes(model: EnrollModel, train_config_digest: str | None = None) -> bytes:
    manifest = parameter_manifest(model.config)
    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "train_config_digest": train_config_digest,
        "manifest": [{"name": name, "shape": list(shape)} for name, shape in manifest],
    }
    blob = canonical_json(meta).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    for name, shape in manifest:
        arr = model.params[name].data
        if arr.shape != shape:
            raise CheckpointError(f"parameter '{name}' has shape {arr.shape}, manifest says {shape}")
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(
    path: str | Path, model: EnrollModel, train_config_digest: str | None = None
) -> None:
    atomic_write_bytes(path, checkpoint_bytes(model, train_config_digest))


def expected_size(meta: dict) -> int:
    """Total file size implied by a metadata block."""
    blob = canonical_json(meta).encode("utf-8")
    payload = sum(
        8 * int(np.prod(entry["shape"])) for entry in meta["manifest"]
    )
    return len(MAGIC) + 4 + len(blob) + payload


def load_checkpoint(path: str | Path) -> tuple[EnrollModel, dict]:
    """Read and validate a checkpoint; returns (model, metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    offset = len(MAGIC)
    (blob_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if offset + blob_len > len(raw):
        raise CheckpointError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(raw[offset : offset + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable metadata ({exc})") from exc
    offset += blob_len
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {meta.get('format_version')}"
        )
    try:
        config = ModelConfig.from_dict(meta["model_config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: invalid model config ({exc})") from exc
    expected = [
        {"name": name, "shape": list(shape)} for name, shape in parameter_manifest(config)
    ]
    if meta.get("manifest") != expected:
        raise CheckpointError(f"{path}: manifest does not match the model config")
    params = {}
    for name, shape in parameter_manifest(config):
        nbytes = 8 * int(np.prod(shape))
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated payload at tensor '{name}'")
        arr = np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)), offset=offset)
        params[name] = Tensor(arr.reshape(shape).copy(), requires_grad=True)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return EnrollModel(config, params), meta
