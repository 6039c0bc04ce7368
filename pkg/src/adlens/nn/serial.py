"""Versioned binary container for named float arrays (checkpoints).

Layout (all integers little-endian, documented in docs/checkpoint-format.md):

    magic        8 bytes   b"ADLNSCK1"
    version      u32       currently 1
    digest_len   u32
    digest       utf-8     model-config digest (sha256 hex)
    n_entries    u32
    entry*:
        name_len u32
        name     utf-8
        dtype    u8        0 = float32, 1 = float64
        ndim     u32
        dims     u64 * ndim
        payload  raw little-endian floats, row-major

Entries are written sorted by name so identical states serialize to identical
bytes regardless of construction order.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"ADLNSCK1"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    pass


def save_arrays(path, digest: str, arrays: dict) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    dig = digest.encode("utf-8")
    blob += struct.pack("<I", len(dig))
    blob += dig
    names = sorted(arrays)
    blob += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _CODES:
            raise CheckpointError(f"entry {name!r} has unsupported dtype {arr.dtype}")
        enc = name.encode("utf-8")
        blob += struct.pack("<I", len(enc))
        blob += enc
        blob += struct.pack("<B", _CODES[arr.dtype])
        blob += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<Q", dim)
        blob += arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_arrays(path, expect_digest: str | None = None):
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    pos = 8
    (version,) = struct.unpack_from("<I", view, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (dlen,) = struct.unpack_from("<I", view, pos)
    pos += 4
    digest = bytes(view[pos : pos + dlen]).decode("utf-8")
    pos += dlen
    if expect_digest is not None and digest != expect_digest:
        raise CheckpointError(f"{path}: config digest mismatch ({digest[:12]}... vs expected {expect_digest[:12]}...)")
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", view, pos)
        pos += 4
        name = bytes(view[pos : pos + nlen]).decode("utf-8")
        pos += nlen
        (code,) = struct.unpack_from("<B", view, pos)
        pos += 1
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: entry {name!r} has unknown dtype code {code}")
        (ndim,) = struct.unpack_from("<I", view, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}Q", view, pos) if ndim else ()
        pos += 8 * ndim
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        if ndim == 0:
            nbytes = dtype.itemsize
        arr = np.frombuffer(view[pos : pos + nbytes], dtype=dtype).reshape(dims).copy()
        pos += nbytes
        arrays[name] = arr.astype(arr.dtype.newbyteorder("="), copy=False)
    if pos != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last entry")
    return digest, arrays
