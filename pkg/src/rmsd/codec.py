"""Canonical byte encoding used for hashing, signing, and the wire.

Rules (fixed, consensus-critical): unsigned integers are big-endian fixed
width, strings are UTF-8 with a 32-bit length prefix, digests and keys are
raw bytes. Equal values encode to identical bytes on every platform.
"""

import struct

U8_MAX = 0xFF
U32_MAX = 0xFFFF_FFFF
U64_MAX = 0xFFFF_FFFF_FFFF_FFFF


class CodecError(ValueError):
    """Bytes do not decode into the expected shape."""


def enc_u8(value: int) -> bytes:
    if not 0 <= value <= U8_MAX:
        raise CodecError(f"u8 out of range: {value}")
    return struct.pack(">B", value)


def enc_u32(value: int) -> bytes:
    if not 0 <= value <= U32_MAX:
        raise CodecError(f"u32 out of range: {value}")
    return struct.pack(">I", value)


def enc_u64(value: int) -> bytes:
    if not 0 <= value <= U64_MAX:
        raise CodecError(f"u64 out of range: {value}")
    return struct.pack(">Q", value)


def enc_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > U32_MAX:
        raise CodecError("string too long")
    return enc_u32(len(raw)) + raw


def enc_fixed(value: bytes, size: int) -> bytes:
    if len(value) != size:
        raise CodecError(f"expected {size} bytes, got {len(value)}")
    return bytes(value)


class Reader:
    """Sequential decoder over one canonical byte string."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise CodecError("truncated input")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def str(self) -> str:
        n = self.u32()
        try:
            return self._take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError("invalid utf-8") from exc

    def fixed(self, size: int) -> bytes:
        return self._take(size)

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self.remaining:
            raise CodecError(f"{self.remaining} trailing bytes")
