"""Binary container for named float32 tensors (network and classifier-head weights)."""
import struct
from typing import Dict, Mapping, Tuple

import numpy as np
from attrs import define, field

from .constants import CHECKPOINT_MAGIC
from .errors import BadMagicError, FormatError, TruncatedPayloadError

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


_COUNTS = struct.Struct("<II")
_NAME_LENGTH = struct.Struct("<H")
_NAME_LENGTH_MAX = 0xFFFF
_RANK = struct.Struct("<B")

# spec code for classifier-head checkpoints; networks use their layer count
HEAD_SPEC_CODE = 0


def _as_tensors(value: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {
        str(name): np.ascontiguousarray(tensor, dtype="<f4")
        for name, tensor in value.items()
    }


def pack_text(text: str, what: str = "name") -> bytes:
    """UTF-8 text behind its little-endian u16 byte length."""
    encoded = text.encode("utf-8")
    if len(encoded) > _NAME_LENGTH_MAX:
        raise FormatError(
            "{} is {} UTF-8 bytes, longer than {}".format(
                what, len(encoded), _NAME_LENGTH_MAX
            )
        )
    return _NAME_LENGTH.pack(len(encoded)) + encoded


class ByteReader:
    """Cursor over a byte string that reports truncation instead of IndexError."""

    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.raw):
            raise TruncatedPayloadError(
                "payload truncated while reading {} at byte {}".format(
                    what, self.offset
                )
            )
        chunk = self.raw[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> Tuple:
        return fmt.unpack(self.take(fmt.size, what))


@define(frozen=True, slots=True, eq=False)
class TensorBundle:
    """Ordered named tensors plus the NetSpec code of the network that produced them."""

    spec_code: int
    tensors: Dict[str, np.ndarray] = field(factory=dict, converter=_as_tensors)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TensorBundle":
        reader = ByteReader(raw)
        magic = reader.take(len(CHECKPOINT_MAGIC), "magic")
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(CHECKPOINT_MAGIC, magic)
        spec_code, count = reader.unpack(_COUNTS, "header")
        tensors = {}
        for _ in range(count):
            (name_length,) = reader.unpack(_NAME_LENGTH, "name length")
            name = reader.take(name_length, "tensor name").decode("utf-8")
            (rank,) = reader.unpack(_RANK, "rank")
            shape = reader.unpack(struct.Struct("<{}I".format(rank)), "shape")
            size = int(np.prod(shape, dtype=np.int64))
            payload = reader.take(size * 4, "payload of {!r}".format(name))
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape)
        if reader.offset != len(raw):
            raise FormatError(
                "{} trailing bytes after the last tensor".format(len(raw) - reader.offset)
            )
        return cls(spec_code=spec_code, tensors=tensors)

    def __bytes__(self) -> bytes:
        chunks = [CHECKPOINT_MAGIC, _COUNTS.pack(self.spec_code, len(self.tensors))]
        for name, tensor in self.tensors.items():
            chunks.append(pack_text(name, "tensor name"))
            chunks.append(_RANK.pack(tensor.ndim))
            chunks.append(struct.pack("<{}I".format(tensor.ndim), *tensor.shape))
            chunks.append(tensor.tobytes())
        return b"".join(chunks)
