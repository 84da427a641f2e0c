"""Canonical byte encoding.

Every signed or hashed object in the protocol is serialized with the same
primitives: big-endian fixed-width integers, length-prefixed byte strings,
count-prefixed lists. Encodings are injective over well-formed values and
carry no dependence on any structured-data library's map ordering, so two
independent implementations produce byte-identical output.

Set-valued fields (constraints, triggers, targets, string sets) are sorted
by their encoded bytes before concatenation, making the encoding order
independent of construction order.
"""

from __future__ import annotations

import struct
from typing import Iterable

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")


def enc_u8(v: int) -> bytes:
    return _U8.pack(v)


def enc_u32(v: int) -> bytes:
    return _U32.pack(v)


def enc_i64(v: int) -> bytes:
    return _I64.pack(v)


def enc_bytes(b: bytes) -> bytes:
    return _U32.pack(len(b)) + b


def enc_str(s: str) -> bytes:
    return enc_bytes(s.encode("utf-8"))


def enc_opt_bytes(b: bytes | None) -> bytes:
    if b is None:
        return b"\x00"
    return b"\x01" + enc_bytes(b)


def enc_opt_str(s: str | None) -> bytes:
    if s is None:
        return b"\x00"
    return b"\x01" + enc_str(s)


def enc_opt_i64(v: int | None) -> bytes:
    if v is None:
        return b"\x00"
    return b"\x01" + _I64.pack(v)


def enc_list(items: Iterable[bytes], sort: bool = False) -> bytes:
    """Count-prefixed list of already-encoded elements, each length-prefixed.

    With sort=True the elements are ordered by their encoded bytes, so the
    result is invariant under reordering of the input.
    """
    encoded = [enc_bytes(item) for item in items]
    if sort:
        encoded.sort()
    return _U32.pack(len(encoded)) + b"".join(encoded)


def enc_str_set(values: Iterable[str]) -> bytes:
    return enc_list((v.encode("utf-8") for v in values), sort=True)


class Reader:
    """Sequential decoder for the canonical encoding."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise ValueError(f"truncated input: need {n} bytes at offset {self._pos}")
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def i64(self) -> int:
        return _I64.unpack(self._take(8))[0]

    def bytes_(self) -> bytes:
        return self._take(self.u32())

    def str_(self) -> str:
        return self.bytes_().decode("utf-8")

    def fixed(self, n: int) -> bytes:
        return self._take(n)

    def opt_bytes(self) -> bytes | None:
        return self.bytes_() if self.u8() else None

    def opt_str(self) -> str | None:
        return self.str_() if self.u8() else None

    def opt_i64(self) -> int | None:
        return self.i64() if self.u8() else None

    def list_(self) -> list[bytes]:
        return [self.bytes_() for _ in range(self.u32())]

    def str_set(self) -> frozenset[str]:
        return frozenset(b.decode("utf-8") for b in self.list_())

    def at_end(self) -> bool:
        return self._pos == len(self._data)

    def remaining(self) -> int:
        return len(self._data) - self._pos
