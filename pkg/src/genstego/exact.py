"""Exact-rational reference coder.

Same contracts as :func:`genstego.coder.embed_aad` and
:func:`genstego.coder.extract_aae`, computed on :class:`fractions.Fraction`
intervals with no rounding at all. Slow; meant for differential testing and
for the exhaustive security computations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Sequence

from .bits import bits_to_int, int_to_bits, keystream_bits
from .coder import MODES, PAPER, PRG, FrequencyTable, _message_prefix
from .errors import AmbiguousStegoError, EntropyExhaustedError, ExtractionError

if TYPE_CHECKING:
    from .models import ConditionalModel

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass(frozen=True)
class RationalInterval:
    low: Fraction = _ZERO
    high: Fraction = _ONE

    def __post_init__(self):
        if not 0 <= self.low < self.high <= 1:
            raise ValueError(f"invalid interval [{self.low}, {self.high})")

    @property
    def width(self) -> Fraction:
        return self.high - self.low

    def split(self, table: FrequencyTable, j: int) -> tuple[Fraction, Fraction]:
        cum = table.cumulative_counts
        w = self.high - self.low
        return (
            self.low + w * Fraction(cum[j], cum[-1]),
            self.low + w * Fraction(cum[j + 1], cum[-1]),
        )

    def refine(self, table: FrequencyTable, j: int) -> "RationalInterval":
        if not 0 <= j < table.alphabet_size:
            raise IndexError(f"symbol index {j} outside alphabet of size {table.alphabet_size}")
        return RationalInterval(*self.split(table, j))

    def locate(self, table: FrequencyTable, point: Fraction) -> int:
        """Index of the sub-interval containing ``point``; boundaries go up."""
        cum = table.cumulative_counts
        # point in [low + w*cum[j]/T, low + w*cum[j+1]/T)  <=>  cum[j] <= (point-low)*T/w
        scaled = (point - self.low) * cum[-1] / (self.high - self.low)
        for j in range(table.alphabet_size):
            if scaled < cum[j + 1]:
                return j
        raise ValueError(f"{point} lies outside [{self.low}, {self.high})")

    def dyadic_count(self, length: int) -> int:
        """Number of multiples of ``2**-length`` in ``[low, high)``."""
        scale = 1 << length
        lo = self.low * scale
        hi = self.high * scale
        return _ceil(hi) - _ceil(lo)

    def contains(self, point: Fraction) -> bool:
        return self.low <= point < self.high


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def _budget(model, max_symbols):
    budget = model.max_length
    if max_symbols is not None:
        budget = max_symbols if budget is None else min(budget, max_symbols)
    return budget


def exact_intervals(symbols: Iterable[int], model: "ConditionalModel", context: bytes = b"") -> list[RationalInterval]:
    """Every interval visited while refining with ``symbols``, starting at ``[0, 1)``."""
    stream = model.start(context)
    iv = RationalInterval()
    out = [iv]
    for y in symbols:
        iv = iv.refine(stream.table(), y)
        stream.push(y)
        out.append(iv)
    return out


def exact_embed(
    bits: Sequence[int],
    model: "ConditionalModel",
    length: int | None = None,
    mode: str = PAPER,
    n_target: int | None = None,
    key: bytes | None = None,
    context: bytes = b"",
    max_symbols: int | None = None,
) -> list[int]:
    message = _message_prefix(bits, length)
    length = len(message)
    stream = model.start(context)
    iv = RationalInterval()
    out: list[int] = []
    if mode == PAPER:
        budget = _budget(model, max_symbols)
        q = Fraction(bits_to_int(message), 1 << length)
        while iv.dyadic_count(length) > 1:
            if budget is not None and len(out) >= budget:
                raise EntropyExhaustedError(
                    f"model budget of {budget} symbols exhausted with {length} message bits"
                )
            table = stream.table()
            j = iv.locate(table, q)
            iv = iv.refine(table, j)
            out.append(j)
            stream.push(j)
        return out
    if mode == PRG:
        if n_target is None or n_target < 0:
            raise ValueError("prg mode requires a non-negative n_target")
        if model.max_length is not None and n_target > model.max_length:
            raise EntropyExhaustedError(f"n_target {n_target} exceeds model budget {model.max_length}")
        if key is None:
            import os

            key = os.urandom(16)
        pad = keystream_bits(key)
        # q is known to lie in [known, known + 2**-depth)
        known, depth = Fraction(bits_to_int(message), 1 << length), length
        for _ in range(n_target):
            table = stream.table()
            while True:
                lo_j = iv.locate(table, known)
                _, hi = iv.split(table, lo_j)
                if known + Fraction(1, 1 << depth) <= hi:
                    break
                depth += 1
                known += Fraction(next(pad), 1 << depth)
            iv = iv.refine(table, lo_j)
            out.append(lo_j)
            stream.push(lo_j)
        if length and _prefix_cell(iv, length) is None:
            raise EntropyExhaustedError(
                f"{n_target} symbols do not carry {length} message bits; raise n_target"
            )
        return out
    raise ValueError(f"unknown mode {mode!r}")


def _prefix_cell(iv: RationalInterval, length: int) -> int | None:
    scale = 1 << length
    first = (iv.low * scale).__floor__()
    last = _ceil(iv.high * scale) - 1
    return first if first == last else None


def exact_extract(
    symbols: Iterable[int],
    model: "ConditionalModel",
    length: int,
    mode: str = PAPER,
    context: bytes = b"",
) -> list[int]:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    stream = model.start(context)
    iv = RationalInterval()
    for y in symbols:
        if not 0 <= y < model.alphabet_size:
            raise ExtractionError(f"symbol {y} outside alphabet of size {model.alphabet_size}")
        iv = iv.refine(stream.table(), y)
        stream.push(y)
    if length == 0:
        return []
    if mode == PRG:
        cell = _prefix_cell(iv, length)
        if cell is None:
            raise AmbiguousStegoError("interval straddles several messages; stego truncated?")
        return int_to_bits(cell, length)
    count = iv.dyadic_count(length)
    if count == 0:
        raise ExtractionError(f"no {length}-bit fraction inside the final interval")
    if count > 1:
        raise AmbiguousStegoError(f"{count} {length}-bit fractions remain; stego truncated?")
    return int_to_bits(_ceil(iv.low * (1 << length)), length)
