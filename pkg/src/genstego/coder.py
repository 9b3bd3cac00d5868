"""Fixed-precision adaptive arithmetic coder used as a stegosystem.

Embedding runs the arithmetic *decoder* with the message bits as its code
stream (AAD): the message, read as a binary fraction, selects one symbol per
step from the model's current frequency table. Extraction runs the *encoder*
(AAE) over the stego symbols and reads the message back off the final
interval.

All arithmetic is on integers. The registers are ``STATE_BITS`` wide and
frequency totals are capped at ``MAX_TOTAL`` so that, after renormalization,
``high - low + 1 > 2**(STATE_BITS - 2)`` always exceeds the total and every
symbol keeps a non-empty sub-interval.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate
from typing import TYPE_CHECKING, Iterable, Sequence

from .bits import BitSink, BitSource, bits_to_int, int_to_bits, keystream_bits
from .errors import AmbiguousStegoError, EntropyExhaustedError, ExtractionError, InvalidTableError

if TYPE_CHECKING:
    from .models import ConditionalModel

STATE_BITS = 32
MAX_TOTAL = 1 << 16

_FULL = 1 << STATE_BITS
_MASK = _FULL - 1
_HALF = _FULL >> 1
_QUARTER = _HALF >> 1
_HALF_MASK = _MASK >> 1
_TOP_SHIFT = STATE_BITS - 1

PAPER = "paper"
PRG = "prg"
MODES = (PAPER, PRG)


@dataclass(frozen=True)
class FrequencyTable:
    """Integer-quantized distribution over ``len(counts)`` symbols."""

    counts: tuple[int, ...]
    cumulative_counts: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) < 2:
            raise InvalidTableError("alphabet must have at least two symbols")
        if min(counts) < 1:
            raise InvalidTableError(f"zero or negative count in {counts}")
        cum = tuple(accumulate(counts, initial=0))
        if cum[-1] > MAX_TOTAL:
            raise InvalidTableError(f"total {cum[-1]} exceeds {MAX_TOTAL}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "cumulative_counts", cum)

    @property
    def total(self) -> int:
        return self.cumulative_counts[-1]

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def cumulative(self, j: int) -> int:
        return cumulative(self, j)

    def probability(self, j: int) -> Fraction:
        return Fraction(self.counts[j], self.total)

    @classmethod
    def _trusted(cls, counts: tuple[int, ...]) -> "FrequencyTable":
        # skips validation; callers guarantee counts >= 1 and total <= MAX_TOTAL
        table = object.__new__(cls)
        object.__setattr__(table, "counts", counts)
        object.__setattr__(table, "cumulative_counts", tuple(accumulate(counts, initial=0)))
        return table

    @classmethod
    def uniform(cls, size: int) -> "FrequencyTable":
        return cls((1,) * size)


def cumulative(table: FrequencyTable, j: int) -> int:
    """Sum of ``counts[:j]``; ``cumulative(table, alphabet_size) == total``."""
    if not 0 <= j <= table.alphabet_size:
        raise IndexError(f"symbol index {j} outside 0..{table.alphabet_size}")
    return table.cumulative_counts[j]


@dataclass(frozen=True)
class CoderState:
    """Register snapshot of the fixed-precision coder.

    ``pending`` counts underflow expansions not yet resolved into output bits.
    ``bits_consumed`` is the number of code bits a decoder in this state has
    read (register width plus one per shift or underflow); ``bits_emitted``
    is the number of bits an encoder has written.
    """

    low: int = 0
    high: int = _MASK
    pending: int = 0
    bits_consumed: int = STATE_BITS
    bits_emitted: int = 0

    @property
    def width(self) -> int:
        return self.high - self.low + 1


class _Coder:
    """Interval narrowing and renormalization shared by encoder and decoder."""

    def __init__(self) -> None:
        self.low = 0
        self.high = _MASK

    def update(self, cum_lo: int, cum_hi: int, total: int) -> None:
        low = self.low
        rng = self.high - low + 1
        high = low + cum_hi * rng // total - 1
        low = low + cum_lo * rng // total
        # leading bits agree: they are final
        while not (low ^ high) & _HALF:
            self._shift(low >> _TOP_SHIFT)
            low = (low << 1) & _MASK
            high = ((high << 1) & _MASK) | 1
        # low = 01..., high = 10...: zoom into the middle half
        while low & ~high & _QUARTER:
            self._underflow()
            low = (low << 1) & _HALF_MASK
            high = ((high << 1) & _HALF_MASK) | _HALF | 1
        self.low = low
        self.high = high

    def _shift(self, bit: int) -> None:
        raise NotImplementedError

    def _underflow(self) -> None:
        raise NotImplementedError


class _Tracker(_Coder):
    def __init__(self, state: CoderState):
        self.low = state.low
        self.high = state.high
        self.pending = state.pending
        self.consumed = state.bits_consumed
        self.emitted = state.bits_emitted

    def _shift(self, bit):
        self.consumed += 1
        self.emitted += 1 + self.pending
        self.pending = 0

    def _underflow(self):
        self.consumed += 1
        self.pending += 1


def refine(state: CoderState, table: FrequencyTable, j: int) -> CoderState:
    """Narrow ``state`` to symbol ``j``'s share of the interval and renormalize."""
    if not 0 <= j < table.alphabet_size:
        raise IndexError(f"symbol index {j} outside alphabet of size {table.alphabet_size}")
    t = _Tracker(state)
    cum = table.cumulative_counts
    t.update(cum[j], cum[j + 1], table.total)
    return CoderState(t.low, t.high, t.pending, t.consumed, t.emitted)


class Encoder(_Coder):
    """Arithmetic encoder (AAE): symbols in, bits out."""

    def __init__(self) -> None:
        super().__init__()
        self.sink = BitSink()
        self.pending = 0

    def _shift(self, bit):
        self.sink.write(bit)
        self.sink.write_repeated(bit ^ 1, self.pending)
        self.pending = 0

    def _underflow(self):
        self.pending += 1

    def encode(self, table: FrequencyTable, j: int) -> None:
        cum = table.cumulative_counts
        self.update(cum[j], cum[j + 1], table.total)

    def scaled_interval(self) -> tuple[int, int, int]:
        """Exact current interval as ``(low, high, e)`` meaning ``[low, high) / 2**e``."""
        emitted = len(self.sink)
        u = self.pending
        e = STATE_BITS + emitted + u
        base = bits_to_int(self.sink.bits) << (u + STATE_BITS)
        if u:
            base += (1 << (u + STATE_BITS - 1)) - (1 << (STATE_BITS - 1))
        return base + self.low, base + self.high + 1, e

    def interval(self) -> tuple[Fraction, Fraction]:
        lo, hi, e = self.scaled_interval()
        return Fraction(lo, 1 << e), Fraction(hi, 1 << e)


class Decoder(_Coder):
    """Arithmetic decoder (AAD): code bits in, symbols out."""

    def __init__(self, source: BitSource):
        super().__init__()
        self.source = source
        code = 0
        for _ in range(STATE_BITS):
            code = (code << 1) | source.read()
        self.code = code

    def _shift(self, bit):
        self.code = ((self.code << 1) & _MASK) | self.source.read()

    def _underflow(self):
        code = self.code
        self.code = (code & _HALF) | ((code << 1) & _HALF_MASK) | self.source.read()

    def decode(self, table: FrequencyTable) -> int:
        cum = table.cumulative_counts
        total = cum[-1]
        low = self.low
        value = ((self.code - low + 1) * total - 1) // (self.high - low + 1)
        j = bisect_right(cum, value) - 1
        self.update(cum[j], cum[j + 1], total)
        return j

    def pins_fraction(self, length: int) -> bool:
        """True once the code fraction is the only ``length``-bit fraction in the interval.

        Valid when every bit after ``length`` is zero, i.e. the code stream is
        exactly the dyadic fraction of the message.
        """
        shift = self.source.consumed - length
        if shift < 0:
            return False
        unit = 1 << shift
        return self.code - self.low < unit and self.high + 1 - self.code <= unit

    def scaled_interval(self) -> tuple[int, int, int]:
        e = self.source.consumed
        origin = bits_to_int(self.source.consumed_bits()) - self.code
        return origin + self.low, origin + self.high + 1, e


def _message_prefix(bits: Sequence[int], length: int | None) -> list[int]:
    bits = list(bits)
    if length is None:
        return bits
    if length > len(bits):
        raise ValueError(f"message length {length} exceeds available {len(bits)} bits")
    return bits[:length]


def _prefix_cell(lo: int, hi: int, e: int, length: int) -> int | None:
    """Index of the ``length``-bit cell containing ``[lo, hi) / 2**e``, if unique."""
    first = (lo << length) >> e
    last = ((hi << length) - 1) >> e
    return first if first == last else None


def _decode_loop(source: BitSource, stream, length: int, n_target: int | None, budget: int | None):
    """AAD driver; same arithmetic as :class:`Decoder`, inlined for speed.

    Runs ``n_target`` steps when given, otherwise until the code fraction is
    the only ``length``-bit fraction left in the interval.
    """
    read = source.read
    table_of = stream.table
    push = stream.push
    code = 0
    for _ in range(STATE_BITS):
        code = (code << 1) | read()
    consumed = STATE_BITS
    low, high = 0, _MASK
    out: list[int] = []
    emit = out.append
    while True:
        if n_target is None:
            shift = consumed - length
            if shift >= 0 and code - low < (1 << shift) and high + 1 - code <= (1 << shift):
                break
            if budget is not None and len(out) >= budget:
                raise EntropyExhaustedError(
                    f"model budget of {budget} symbols exhausted with {length} message bits"
                )
        elif len(out) >= n_target:
            break
        cum = table_of().cumulative_counts
        total = cum[-1]
        rng = high - low + 1
        j = bisect_right(cum, ((code - low + 1) * total - 1) // rng) - 1
        high = low + cum[j + 1] * rng // total - 1
        low = low + cum[j] * rng // total
        while not (low ^ high) & _HALF:
            code = ((code << 1) & _MASK) | read()
            consumed += 1
            low = (low << 1) & _MASK
            high = ((high << 1) & _MASK) | 1
        while low & ~high & _QUARTER:
            code = (code & _HALF) | ((code << 1) & _HALF_MASK) | read()
            consumed += 1
            low = (low << 1) & _HALF_MASK
            high = ((high << 1) & _HALF_MASK) | _HALF | 1
        emit(j)
        push(j)
    origin = bits_to_int(source.consumed_bits()) - code
    return out, (origin + low, origin + high + 1, consumed)


def embed_aad(
    bits: Sequence[int],
    model: "ConditionalModel",
    length: int | None = None,
    mode: str = PAPER,
    n_target: int | None = None,
    key: bytes | None = None,
    context: bytes = b"",
    max_symbols: int | None = None,
) -> list[int]:
    """Embed message bits into a symbol sequence drawn from ``model``.

    Parameters
    ----------
    bits : sequence of 0/1
        Message bits (assumed uniformly distributed, i.e. already encrypted).
    model : ConditionalModel
        Autoregressive model; the receiver must run an identical one.
    length : int, optional
        Number of message bits to embed; defaults to ``len(bits)``.
    mode : {"paper", "prg"}
        ``"paper"`` stops as soon as the interval contains a single
        ``length``-bit fraction. ``"prg"`` keeps decoding with keystream bits
        after the message until exactly ``n_target`` symbols are emitted.
    n_target : int, optional
        Output length, required in ``"prg"`` mode.
    key : bytes, optional
        Keystream key for ``"prg"`` padding. Defaults to fresh OS entropy.
    context : bytes
        Global conditioning tag passed to the model.
    max_symbols : int, optional
        Extra cap on the output length in ``"paper"`` mode.

    Returns
    -------
    list of int
        The stego symbols.

    Raises
    ------
    EntropyExhaustedError
        The model budget (or ``max_symbols``) is reached before the message
        is pinned down, or ``n_target`` symbols cannot carry ``length`` bits.
    """
    message = _message_prefix(bits, length)
    length = len(message)
    stream = model.start(context)
    budget = model.max_length
    if mode == PAPER:
        if max_symbols is not None:
            budget = max_symbols if budget is None else min(budget, max_symbols)
        return _decode_loop(BitSource.zero_extended(message), stream, length, None, budget)[0]
    if mode == PRG:
        if n_target is None or n_target < 0:
            raise ValueError("prg mode requires a non-negative n_target")
        if budget is not None and n_target > budget:
            raise EntropyExhaustedError(f"n_target {n_target} exceeds model budget {budget}")
        if key is None:
            import os

            key = os.urandom(16)
        source = BitSource(message, keystream_bits(key))
        out, interval = _decode_loop(source, stream, length, n_target, None)
        if length and _prefix_cell(*interval, length) is None:
            raise EntropyExhaustedError(
                f"{n_target} symbols do not carry {length} message bits; raise n_target"
            )
        return out
    raise ValueError(f"unknown mode {mode!r}")


def _encode_loop(symbols: Iterable[int], stream, size: int) -> tuple[int, int, int]:
    """AAE driver; same arithmetic as :class:`Encoder`, inlined for speed."""
    table_of = stream.table
    push = stream.push
    low, high = 0, _MASK
    out: list[int] = []
    emit = out.append
    pending = 0
    for y in symbols:
        if not 0 <= y < size:
            raise ExtractionError(f"symbol {y} outside alphabet of size {size}")
        cum = table_of().cumulative_counts
        total = cum[-1]
        rng = high - low + 1
        high = low + cum[y + 1] * rng // total - 1
        low = low + cum[y] * rng // total
        while not (low ^ high) & _HALF:
            bit = low >> _TOP_SHIFT
            emit(bit)
            if pending:
                out.extend([bit ^ 1] * pending)
                pending = 0
            low = (low << 1) & _MASK
            high = ((high << 1) & _MASK) | 1
        while low & ~high & _QUARTER:
            pending += 1
            low = (low << 1) & _HALF_MASK
            high = ((high << 1) & _HALF_MASK) | _HALF | 1
        push(y)
    e = STATE_BITS + len(out) + pending
    base = bits_to_int(out) << (pending + STATE_BITS)
    if pending:
        base += (1 << (pending + STATE_BITS - 1)) - (1 << (STATE_BITS - 1))
    return base + low, base + high + 1, e


def extract_aae(
    symbols: Iterable[int],
    model: "ConditionalModel",
    length: int,
    mode: str = PAPER,
    context: bytes = b"",
) -> list[int]:
    """Recover ``length`` message bits from stego ``symbols``.

    A model that differs from the sender's is not detected; it simply
    yields different bits.

    Raises
    ------
    AmbiguousStegoError
        The final interval still admits several messages (truncated stego).
    ExtractionError
        No ``length``-bit fraction lies in the interval (corrupt stego).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    lo, hi, e = _encode_loop(symbols, model.start(context), model.alphabet_size)
    if length == 0:
        return []
    if mode == PRG:
        cell = _prefix_cell(lo, hi, e, length)
        if cell is None:
            raise AmbiguousStegoError("interval straddles several messages; stego truncated?")
        return int_to_bits(cell, length)
    # smallest multiple of 2**-length not below the interval's low end
    k = -((-(lo << length)) >> e)
    if (k << e) >= (hi << length):
        raise ExtractionError(f"no {length}-bit fraction inside the final interval")
    if ((k + 1) << e) < (hi << length):
        raise AmbiguousStegoError(f"several {length}-bit fractions remain; stego truncated?")
    return int_to_bits(k, length)
