"""Bit-level plumbing: conversions, sources, sinks and the keyed keystream."""

from __future__ import annotations

import hashlib
import itertools
from typing import Iterable, Iterator, Sequence


def bytes_to_bits(data: bytes) -> list[int]:
    """MSB-first bit expansion."""
    return [(byte >> shift) & 1 for byte in data for shift in range(7, -1, -1)]


def bits_to_bytes(bits: Sequence[int]) -> bytes:
    if len(bits) % 8:
        raise ValueError(f"bit count {len(bits)} is not a multiple of 8")
    return bits_to_int(bits).to_bytes(len(bits) // 8, "big")


def bits_to_int(bits: Sequence[int]) -> int:
    if not bits:
        return 0
    return int("".join("1" if b else "0" for b in bits), 2)


def int_to_bits(value: int, width: int) -> list[int]:
    if width == 0:
        return []
    if value < 0 or value >> width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [int(c) for c in format(value, f"0{width}b")]


def parse_bit_string(text: str) -> list[int]:
    """Parse a textual bit string such as ``"010"``; whitespace is ignored."""
    bits = []
    for ch in text:
        if ch in "01":
            bits.append(ord(ch) - 48)
        elif not ch.isspace():
            raise ValueError(f"unexpected character {ch!r} in bit string")
    return bits


def keystream_bits(key: bytes) -> Iterator[int]:
    """Endless pseudorandom bit stream keyed by ``key`` (BLAKE2b in counter mode)."""
    key = hashlib.blake2b(key, digest_size=32).digest()
    for counter in itertools.count():
        block = hashlib.blake2b(counter.to_bytes(8, "little"), key=key, digest_size=64).digest()
        for byte in block:
            for shift in range(7, -1, -1):
                yield (byte >> shift) & 1


def seed_key(seed: int) -> bytes:
    return seed.to_bytes((max(seed.bit_length(), 1) + 7) // 8, "little", signed=False)


def whiten(data: bytes, key: bytes) -> bytes:
    """XOR ``data`` with the keystream. Involutive; not a substitute for a real cipher."""
    stream = keystream_bits(b"whiten:" + key)
    pad = bits_to_bytes([next(stream) for _ in range(8 * len(data))]) if data else b""
    return bytes(a ^ b for a, b in zip(data, pad))


class BitSource:
    """Sequential reader over message bits with an optional continuation.

    Without a ``tail`` reading past the message raises ``EOFError``. A tail
    iterator (zeros for an exact dyadic fraction, a keystream for padding)
    supplies bits beyond the message; those bits are recorded so the caller
    can reconstruct everything that was consumed.
    """

    def __init__(self, bits: Sequence[int], tail: Iterable[int] | None = None):
        self._bits = list(bits)
        self._pos = 0
        self._tail = iter(tail) if tail is not None else None
        self.extra: list[int] = []

    @classmethod
    def zero_extended(cls, bits: Sequence[int]) -> "BitSource":
        return cls(bits, itertools.repeat(0))

    def __len__(self) -> int:
        return len(self._bits)

    @property
    def consumed(self) -> int:
        return self._pos + len(self.extra)

    def read(self) -> int:
        if self._pos < len(self._bits):
            bit = self._bits[self._pos]
            self._pos += 1
            return bit
        if self._tail is None:
            raise EOFError("read past the end of the message")
        bit = next(self._tail)
        self.extra.append(bit)
        return bit

    def consumed_bits(self) -> list[int]:
        return self._bits[: self._pos] + self.extra


class BitSink:
    """Append-only bit buffer."""

    def __init__(self) -> None:
        self.bits: list[int] = []

    def write(self, bit: int) -> None:
        self.bits.append(bit)

    def write_repeated(self, bit: int, count: int) -> None:
        if count:
            self.bits.extend([bit] * count)

    def __len__(self) -> int:
        return len(self.bits)
