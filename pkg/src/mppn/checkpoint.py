"""Binary checkpoint container.

Layout, all integers little-endian:

    magic "MPPN" | version u32 | config_len u64 | config utf-8 bytes |
    tensor_count u32 | per tensor:
        name_len u32 | name utf-8 | rank u32 | dims u64 * rank |
        payload float64-LE (product(dims) values)

Loading validates magic/version and every length before touching payload
bytes, so a truncated file fails cleanly with the offending byte offset.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"MPPN"
VERSION = 1
_MAX_RANK = 16


def save_checkpoint(path, config_text: str, tensors: list[tuple[str, np.ndarray]]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", VERSION)
    cfg = config_text.encode("utf-8")
    buf += struct.pack("<Q", len(cfg))
    buf += cfg
    buf += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        arr = np.asarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        buf += struct.pack("<I", len(nb))
        buf += nb
        buf += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            buf += struct.pack("<Q", dim)
        buf += arr.astype("<f8", copy=False).tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, blob: bytes, label: str):
        self.blob = blob
        self.off = 0
        self.label = label

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(
                f"{self.label}: truncated while reading {what} at byte {self.off} "
                f"(need {n}, have {len(self.blob) - self.off})")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    r = _Reader(blob, str(path))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    cfg_len = r.u64("config length")
    try:
        config_text = r.take(cfg_len, "config").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: config is not valid UTF-8 at byte {r.off}") from exc
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = r.u32("name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: tensor name is not valid UTF-8 at byte {r.off}") from exc
        rank = r.u32("rank")
        if rank > _MAX_RANK:
            raise FormatError(f"{path}: implausible rank {rank} at byte {r.off - 4}")
        dims = tuple(r.u64(f"dim {i}") for i in range(rank))
        numel = 1
        for d in dims:
            numel *= d
        payload = r.take(numel * 8, f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    if r.off != len(blob):
        raise FormatError(f"{path}: {len(blob) - r.off} trailing bytes at byte {r.off}")
    return config_text, tensors
