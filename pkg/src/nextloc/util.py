"""Small shared helpers: seed derivation, canonical JSON, content hashes.

All randomness in the package flows from explicit integer seeds. Sub-seeds
for independent purposes (init, shuffling, split sampling, ...) are derived
by hashing ``"{label}:{base}"`` with BLAKE2b, so adding a new consumer never
perturbs the streams of existing ones.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np


def derive_seed(base: int, label: str) -> int:
    """Stable 63-bit sub-seed for `label` under `base`."""
    digest = hashlib.blake2b(f"{label}:{base}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def make_rng(base: int, label: str) -> np.random.Generator:
    """Seeded PCG64 generator for one purpose; independent per label."""
    return np.random.default_rng(derive_seed(base, label))


def stable_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, no whitespace jitter."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
