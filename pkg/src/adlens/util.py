"""Small shared helpers: canonical JSON, digests, seeded generators."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    """Stable JSON encoding used for digests and on-disk artifacts."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stable_word(stream) -> int:
    raw = hashlib.sha256(repr(stream).encode("utf-8")).digest()
    return int.from_bytes(raw[:4], "little")


def rng_for(seed: int, *streams) -> np.random.Generator:
    """Independent generator for (seed, stream...) so stages never share state."""
    mixed = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *(_stable_word(s) for s in streams)])
    return np.random.default_rng(mixed)
