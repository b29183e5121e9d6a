"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"SSF2"
    version u32      currently 1
    count   u32      number of tensor records
    record  u32 name length, UTF-8 name,
            u8 dtype code (0 = float32, 1 = uint8),
            u32 rank, u32 dims..., raw data
    footer  u64 CRC32 of all record bytes

Training metadata (seed, step, config snapshot/digest) rides along as a
uint8 record named ``__meta__`` holding canonical JSON, so save -> load
-> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SSF2"
VERSION = 1
META_KEY = "__meta__"
_DTYPES = {0: np.float32, 1: np.uint8}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.uint8): 1}
_MAX_RANK = 16
_MAX_ELEMS = 1 << 33


class CheckpointError(ValueError):
    """Structured load/save failure: ``kind`` names the violated rule."""

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {detail}" if detail else kind)


@dataclass
class Checkpoint:
    """Named tensors plus training metadata."""

    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    format_version: int = VERSION

    def __post_init__(self):
        self.tensors = {k: np.ascontiguousarray(v) for k, v in self.tensors.items()}


def config_digest(config: dict) -> str:
    """Stable sha256 hex digest of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _pack_record(name: str, arr: np.ndarray) -> bytes:
    code = _CODES.get(arr.dtype)
    if code is None:
        raise CheckpointError("unsupported dtype", str(arr.dtype))
    nb = name.encode("utf-8")
    head = struct.pack("<I", len(nb)) + nb + struct.pack("<BI", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype(arr.dtype, copy=False).tobytes(order="C")


def save_checkpoint(ckpt: Checkpoint, path: str):
    records = dict(ckpt.tensors)
    meta_blob = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    records[META_KEY] = np.frombuffer(meta_blob, dtype=np.uint8)
    payload = b"".join(_pack_record(k, v) for k, v in records.items())
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", ckpt.format_version, len(records)))
        f.write(payload)
        f.write(struct.pack("<Q", crc))


class _Reader:
    def __init__(self, blob: bytes, offset: int):
        self.blob = blob
        self.pos = offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated file", f"needed {n} bytes at offset {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 + 8:
        raise CheckpointError("truncated file", f"only {len(blob)} bytes")
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic", repr(blob[:4]))
    version, count = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise CheckpointError("unsupported version", str(version))
    payload = blob[12:-8]
    (crc_stored,) = struct.unpack("<Q", blob[-8:])
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise CheckpointError("payload CRC mismatch", f"stored {crc_stored:#x}, computed {crc:#x}")

    r = _Reader(blob, 12)
    end = len(blob) - 8
    tensors: dict[str, np.ndarray] = {}
    meta: dict = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        code = r.u8()
        if code not in _DTYPES:
            raise CheckpointError("unsupported dtype code", str(code))
        rank = r.u32()
        if rank > _MAX_RANK:
            raise CheckpointError("shape overflow", f"rank {rank}")
        dims = [r.u32() for _ in range(rank)]
        n = 1
        for dim in dims:
            n *= dim
        if n > _MAX_ELEMS:
            raise CheckpointError("shape overflow", f"{n} elements")
        dtype = np.dtype(_DTYPES[code]).newbyteorder("<")
        raw = r.take(n * dtype.itemsize)
        arr = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(_DTYPES[code])
        if name == META_KEY:
            meta = json.loads(arr.tobytes().decode("utf-8")) if arr.size else {}
        else:
            tensors[name] = arr
    if r.pos != end:
        raise CheckpointError("trailing bytes", f"{end - r.pos} unread payload bytes")
    return Checkpoint(tensors=tensors, meta=meta, format_version=version)
