"""Binary checkpoints.

Layout: b"FFHR", u32 format version, u64 metadata length, UTF-8 JSON
metadata, then every array as raw little-endian float64 in the order the
metadata lists them.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelParams, TrainConfig

MAGIC = b"FFHR"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: ModelParams, path) -> None:
    names = list(model.arrays)
    meta = {
        "config": model.config.to_dict(),
        "num_entities": model.num_entities,
        "num_relations": model.num_relations,
        "vocab_hash": model.vocab_hash,
        "curvature": model.curvature,
        "arrays": [{"name": k, "shape": list(model.arrays[k].shape)} for k in names],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in names:
            fh.write(np.ascontiguousarray(model.arrays[k], dtype="<f8").tobytes())


def load_checkpoint(path, expect_vocab_hash: str | None = None) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an FFHR checkpoint")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<Q", raw, 8)
    pos = 16 + meta_len
    if pos > len(raw):
        raise CheckpointError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(raw[16:pos].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata: {exc}") from None

    arrays = {}
    for spec in meta["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated array data ({spec['name']})")
        arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")

    if expect_vocab_hash is not None and meta["vocab_hash"] != expect_vocab_hash:
        raise CheckpointError(f"{path}: vocabulary hash mismatch (checkpoint trained on a different dataset)")
    config = TrainConfig.from_dict(meta["config"])
    return ModelParams(config, meta["num_entities"], meta["num_relations"], arrays, meta["vocab_hash"])
