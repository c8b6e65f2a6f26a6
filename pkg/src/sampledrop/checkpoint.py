"""Binary checkpoint format, bit-exact across save/load.

Layout, all integers little-endian u32 unless noted:

    magic "SSCSE" (5 bytes)
    format version u32
    config block: u32 byte length + canonical JSON (encoder config,
        vocabulary tokens in id order, run metadata)
    tensor count u32
    per tensor: u32 name length, name bytes (utf-8), u32 rank,
        u32 dims, raw float64 little-endian values, row-major
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .encoder import EncoderConfig, EncoderWeights
from .errors import CheckpointError
from .tensor import Tensor

MAGIC = b"SSCSE"
FORMAT_VERSION = 1


@dataclass
class CheckpointData:
    weights: EncoderWeights
    config: EncoderConfig
    vocab: Vocabulary
    meta: dict


def _config_block(config: EncoderConfig, vocab: Vocabulary, meta: dict) -> bytes:
    payload = {
        "encoder": config.to_dict(),
        "vocab": vocab.tokens(),
        "meta": meta,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(
    path,
    weights: EncoderWeights,
    config: EncoderConfig,
    vocab: Vocabulary,
    meta: dict | None = None,
) -> None:
    block = _config_block(config, vocab, meta or {})
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(block))
    out += block
    items = list(weights.items())
    out += struct.pack("<I", len(items))
    for name, param in items:
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded))
        out += encoded
        out += struct.pack("<I", param.data.ndim)
        for dim in param.data.shape:
            out += struct.pack("<I", dim)
        out += np.ascontiguousarray(param.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> CheckpointData:
    reader = _Reader(Path(path).read_bytes(), path)
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported, expected {FORMAT_VERSION}"
        )
    block = json.loads(reader.take(reader.u32()).decode("utf-8"))
    config = EncoderConfig.from_dict(block["encoder"])
    vocab = Vocabulary.from_tokens(block["vocab"])
    params: dict[str, Tensor] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        raw = reader.take(count * 8)
        data = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        params[name] = Tensor(data.copy(), requires_grad=True)
    if reader.pos != len(reader.buf):
        raise CheckpointError(f"{path}: {len(reader.buf) - reader.pos} trailing bytes")
    return CheckpointData(
        weights=EncoderWeights(params),
        config=config,
        vocab=vocab,
        meta=block.get("meta", {}),
    )
