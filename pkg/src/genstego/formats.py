"""Byte-exact file formats: models, stego sequences and latent vectors.

All multi-byte integers are little-endian and fixed width; floats are
IEEE-754 binary64. Layouts are documented in the README.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .coder import PAPER, PRG, FrequencyTable
from .errors import FormatError, InvalidTableError, ModelFormatError
from .latent import MAX_PAYLOAD, IntervalPartition
from .models import AdaptiveMarkovModel, ConditionalModel, StaticModel

MODEL_MAGIC = b"SGMD"
STEGO_MAGIC = b"STG1"
LATENT_MAGIC = b"SGLV"
VERSION = 1

_KIND_MARKOV = 0
_KIND_STATIC = 1
_FLAG_LABELS = 1
_FLAG_ADAPTIVE = 2
_FLAG_BOUNDED = 4
_U32_MAX = 0xFFFFFFFF

_MODEL_HEAD = struct.Struct("<4sHBBH")
_MARKOV_HEAD = struct.Struct("<BBII")
_STEGO_HEAD = struct.Struct("<4sBBBBII32s")
_LATENT_HEAD = struct.Struct("<4sHBBQI")

FLAG_LENGTH_PREFIX = 1
FLAG_BIT_TEXT = 2
_MODE_CODES = {PAPER: 0, PRG: 1}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}


class _Reader:
    def __init__(self, data: bytes, error=FormatError):
        self.data = data
        self.pos = 0
        self.error = error

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise self.error(f"truncated: need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct):
        return fmt.unpack(self.take(fmt.size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt)

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise self.error(f"{len(self.data) - self.pos} trailing bytes")


def serialize_model(model: ConditionalModel) -> bytes:
    """Canonical byte encoding; equal models always serialize identically."""
    if isinstance(model, StaticModel):
        flags = _FLAG_BOUNDED if model.bounded else 0
        out = [_MODEL_HEAD.pack(MODEL_MAGIC, VERSION, _KIND_STATIC, flags, model.alphabet_size)]
        out.append(struct.pack("<I", len(model.tables)))
        for t in model.tables:
            out.append(struct.pack(f"<{model.alphabet_size}I", *t.counts))
        return b"".join(out)
    if isinstance(model, AdaptiveMarkovModel):
        size = model.alphabet_size
        if size > 0xFFFF or model.order > 0xFF:
            raise ModelFormatError("alphabet or order too large for the model format")
        flags = (_FLAG_LABELS if model.labels is not None else 0) | (_FLAG_ADAPTIVE if model.adaptive else 0)
        out = [
            _MODEL_HEAD.pack(MODEL_MAGIC, VERSION, _KIND_MARKOV, flags, size),
            _MARKOV_HEAD.pack(model.order, 0, model.width, len(model.counts)),
        ]
        if model.labels is not None:
            out.append(model.labels)
        for ctx in sorted(model.counts, key=lambda c: (len(c), c)):
            row = model.counts[ctx]
            if max(row) > _U32_MAX or sum(row) > _U32_MAX:
                raise ModelFormatError(f"count overflow in context {ctx}")
            out.append(struct.pack(f"<B{len(ctx)}H{size}I", len(ctx), *ctx, *row))
        return b"".join(out)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def deserialize_model(data: bytes) -> ConditionalModel:
    r = _Reader(data, ModelFormatError)
    magic, version, kind, flags, size = r.unpack(_MODEL_HEAD)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    if size < 2:
        raise ModelFormatError(f"alphabet size {size} < 2")
    try:
        if kind == _KIND_STATIC:
            (n_tables,) = r.unpack(struct.Struct("<I"))
            if n_tables == 0:
                raise ModelFormatError("static model without tables")
            tables = [FrequencyTable(tuple(int(c) for c in r.array("<u4", size))) for _ in range(n_tables)]
            r.finish()
            return StaticModel(tables, bounded=bool(flags & _FLAG_BOUNDED))
        if kind == _KIND_MARKOV:
            order, _, width, n_records = r.unpack(_MARKOV_HEAD)
            labels = r.take(size) if flags & _FLAG_LABELS else None
            counts = {}
            previous = None
            for _ in range(n_records):
                (ctx_len,) = r.take(1)
                ctx = tuple(int(s) for s in r.array("<u2", ctx_len))
                row = tuple(int(c) for c in r.array("<u4", size))
                if sum(row) > _U32_MAX:
                    raise ModelFormatError(f"count overflow in context {ctx}")
                key = (len(ctx), ctx)
                if previous is not None and key <= previous:
                    raise ModelFormatError("context records out of order or duplicated")
                previous = key
                counts[ctx] = row
            r.finish()
            return AdaptiveMarkovModel(
                size, order, counts, width=width, labels=labels, adaptive=bool(flags & _FLAG_ADAPTIVE)
            )
    except (InvalidTableError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(str(exc)) from exc
    raise ModelFormatError(f"unknown model kind {kind}")


def model_digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class StegoFile:
    mode: str
    length: int
    model_digest: bytes
    symbols: tuple[int, ...]
    flags: int = FLAG_LENGTH_PREFIX

    def to_bytes(self) -> bytes:
        if self.mode not in _MODE_CODES:
            raise FormatError(f"unknown mode {self.mode!r}")
        if not 0 <= self.length <= _U32_MAX:
            raise FormatError("message length does not fit in 32 bits")
        if len(self.model_digest) != 32:
            raise FormatError("model digest must be 32 bytes")
        width = 1 if not self.symbols or max(self.symbols) < 256 else 2
        head = _STEGO_HEAD.pack(
            STEGO_MAGIC, VERSION, _MODE_CODES[self.mode], self.flags, width,
            self.length, len(self.symbols), self.model_digest,
        )
        body = np.asarray(self.symbols, dtype="<u1" if width == 1 else "<u2").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "StegoFile":
        r = _Reader(data)
        magic, version, mode, flags, width, length, count, digest = r.unpack(_STEGO_HEAD)
        if magic != STEGO_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported stego version {version}")
        if mode not in _CODE_MODES:
            raise FormatError(f"unknown mode code {mode}")
        if width not in (1, 2):
            raise FormatError(f"bad symbol width {width}")
        symbols = r.array("<u1" if width == 1 else "<u2", count)
        r.finish()
        return cls(_CODE_MODES[mode], length, digest, tuple(int(s) for s in symbols), flags)


@dataclass(frozen=True)
class LatentFile:
    p: int
    message_bits: int
    interior: np.ndarray
    coordinates: np.ndarray
    flags: int = 0

    @property
    def partition(self) -> IntervalPartition:
        return IntervalPartition.from_interior(self.p, self.interior)

    def to_bytes(self) -> bytes:
        interior = np.asarray(self.interior, dtype="<f8")
        coords = np.asarray(self.coordinates, dtype="<f8").reshape(-1)
        if interior.size != 2**self.p - 1:
            raise FormatError("boundary table does not match payload")
        head = _LATENT_HEAD.pack(LATENT_MAGIC, VERSION, self.p, self.flags, self.message_bits, coords.size)
        return head + interior.tobytes() + coords.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LatentFile":
        r = _Reader(data)
        magic, version, p, flags, message_bits, count = r.unpack(_LATENT_HEAD)
        if magic != LATENT_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported latent version {version}")
        if not 1 <= p <= MAX_PAYLOAD:
            raise FormatError(f"payload {p} outside 1..{MAX_PAYLOAD}")
        if message_bits > count * p:
            raise FormatError("message longer than the coordinates can carry")
        interior = r.array("<f8", 2**p - 1).astype(np.float64)
        coords = r.array("<f8", count).astype(np.float64)
        r.finish()
        try:
            IntervalPartition.from_interior(p, interior)
        except ValueError as exc:
            raise FormatError(f"bad boundary table: {exc}") from exc
        if not np.all(np.isfinite(coords)):
            raise FormatError("non-finite coordinate")
        return cls(p, message_bits, interior, coords, flags)
