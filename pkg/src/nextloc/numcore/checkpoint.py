"""Versioned binary parameter checkpoints.

Layout (all integers little-endian):

    bytes 0..3    magic b"NLCK"
    bytes 4..7    format version (uint32), currently 1
    bytes 8..15   header length H (uint64)
    bytes 16..    H bytes of UTF-8 JSON:
                    {"meta": {...}, "params": [{"name": ..., "shape": [...]}, ...]}
                  entries sorted by name
    then          for each entry in header order, the values as
                  little-endian float64 in row-major order

The byte stream is a pure function of (meta, parameter values), so identical
training runs produce identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"NLCK"
VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file is malformed or truncated."""


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    for name in sorted(params):
        arr = np.ascontiguousarray(np.asarray(params[name], dtype=np.float64))
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.astype("<f8", copy=False).tobytes())
    header = json.dumps(
        {"meta": meta or {}, "params": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += VERSION.to_bytes(4, "little")
    out += len(header).to_bytes(8, "little")
    out += header
    for blob in blobs:
        out += blob
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint (bad magic)")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    hlen = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    params: dict[str, np.ndarray] = {}
    offset = 16 + hlen
    for entry in header.get("params", []):
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"{path}: truncated values for {entry['name']!r}")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64)
        params[entry["name"]] = arr.reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return params, header.get("meta", {})
