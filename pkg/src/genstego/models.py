"""Deterministic autoregressive models emitting integer frequency tables.

Every model is consumed through a :class:`ModelStream`: ``table()`` gives the
distribution for the next position and ``push(symbol)`` advances the stream
afterwards. Sender and receiver drive identical streams with the same
symbols, so they see bit-identical tables at every step.
"""

from __future__ import annotations

import math
import random
import statistics
from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .coder import MAX_TOTAL, FrequencyTable
from .errors import EntropyExhaustedError

DEFAULT_WIDTH = 1 << 14


def _apportion(weights: Sequence[int], width: int) -> tuple[int, ...]:
    """Largest-remainder rounding of integer ``weights`` to counts summing to ``width``.

    Every count is floored at 1. Any excess this creates is taken back from
    the most over-allocated symbols, never from the heaviest one unless it is
    the only symbol left above 1.
    """
    size = len(weights)
    if width < size:
        raise ValueError(f"budget {width} smaller than alphabet size {size}")
    total = sum(weights)
    if total <= 0 or min(weights) < 0:
        raise ValueError("weights must be non-negative with a positive sum")
    counts = [w * width // total or 1 for w in weights]
    diff = width - sum(counts)
    if not diff:
        return tuple(counts)
    # remainder of the exact share over the count, scaled by total
    rem = [w * width - c * total for w, c in zip(weights, counts)]
    if diff > 0:
        # stable descending sort: ties go to the lower index
        order = sorted(range(size), key=rem.__getitem__, reverse=True)
        for i in order[:diff]:
            counts[i] += 1
    else:
        top = max(range(size), key=lambda i: (weights[i], -i))
        for _ in range(-diff):
            candidates = [i for i in range(size) if counts[i] > 1 and i != top]
            if not candidates:
                candidates = [top]
            i = min(candidates, key=lambda i: (rem[i], -i))
            counts[i] -= 1
            rem[i] += total
    return tuple(counts)


def quantize(probabilities: Sequence[float], width: int = DEFAULT_WIDTH) -> FrequencyTable:
    """Quantize real probabilities to a :class:`FrequencyTable` of total ``width``.

    Conversion goes through exact binary fractions, so the result is the same
    on every platform.
    """
    if width > MAX_TOTAL:
        raise ValueError(f"width {width} exceeds coder limit {MAX_TOTAL}")
    if any(p < 0 or not math.isfinite(p) for p in probabilities):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(math.fsum(probabilities) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    fracs = [Fraction(p) for p in probabilities]
    denom = max(f.denominator for f in fracs)
    weights = [int(f * denom) for f in fracs]
    return FrequencyTable(_apportion(weights, width))


def quantize_counts(counts: Sequence[int], width: int = DEFAULT_WIDTH) -> FrequencyTable:
    """Integer-only variant of :func:`quantize` for raw counts."""
    if width > MAX_TOTAL:
        raise ValueError(f"width {width} exceeds coder limit {MAX_TOTAL}")
    return FrequencyTable._trusted(_apportion(counts, width))


class ModelStream(ABC):
    """Per-sequence mutable state of a model."""

    @abstractmethod
    def table(self) -> FrequencyTable:
        """Distribution of the next symbol."""

    @abstractmethod
    def push(self, symbol: int) -> None:
        """Record ``symbol`` as emitted at the current position."""

    @abstractmethod
    def clone(self) -> "ModelStream":
        ...


class ConditionalModel(ABC):
    """Interface for ``p(x_i | x_1..x_{i-1}, context)`` with integer tables."""

    alphabet_size: int
    #: Longest sequence the model can describe; ``None`` when unbounded.
    max_length: int | None = None

    @abstractmethod
    def start(self, context: bytes = b"") -> ModelStream:
        ...

    def next_distribution(self, history: Sequence[int] = (), context: bytes = b"") -> FrequencyTable:
        stream = self.start(context)
        for symbol in history:
            if not 0 <= symbol < self.alphabet_size:
                raise ValueError(f"symbol {symbol} outside alphabet of size {self.alphabet_size}")
            stream.table()
            stream.push(symbol)
        return stream.table()

    def sequence_probability(self, symbols: Sequence[int], context: bytes = b"") -> Fraction:
        """Exact product of conditionals."""
        stream = self.start(context)
        p = Fraction(1)
        for y in symbols:
            t = stream.table()
            p *= Fraction(t.counts[y], t.total)
            stream.push(y)
        return p


class StaticModel(ConditionalModel):
    """History-independent model: one table forever, or a positional schedule.

    A schedule is bounded by default: asking for a table past its end raises
    :class:`EntropyExhaustedError`.
    """

    def __init__(self, tables: Sequence[FrequencyTable] | FrequencyTable, bounded: bool | None = None):
        if isinstance(tables, FrequencyTable):
            tables = [tables]
        tables = tuple(tables)
        if not tables:
            raise ValueError("need at least one table")
        sizes = {t.alphabet_size for t in tables}
        if len(sizes) != 1:
            raise ValueError(f"tables disagree on alphabet size: {sorted(sizes)}")
        self.tables = tables
        self.alphabet_size = sizes.pop()
        self.bounded = len(tables) > 1 if bounded is None else bounded
        self.max_length = len(tables) if self.bounded else None

    @classmethod
    def from_probabilities(cls, *rows: Sequence[float], width: int = 100, bounded: bool | None = None):
        return cls([quantize(r, width) for r in rows], bounded=bounded)

    def start(self, context: bytes = b"") -> "_StaticStream":
        return _StaticStream(self, 0)

    def __eq__(self, other):
        return (
            isinstance(other, StaticModel)
            and self.tables == other.tables
            and self.bounded == other.bounded
        )

    def __repr__(self):
        return f"StaticModel({len(self.tables)} tables, bounded={self.bounded})"


class _StaticStream(ModelStream):
    __slots__ = ("model", "pos")

    def __init__(self, model: StaticModel, pos: int):
        self.model = model
        self.pos = pos

    def table(self):
        tables = self.model.tables
        if self.pos < len(tables):
            return tables[self.pos]
        if self.model.bounded:
            raise EntropyExhaustedError(f"schedule of {len(tables)} tables exhausted")
        return tables[-1]

    def push(self, symbol):
        self.pos += 1

    def clone(self):
        return _StaticStream(self.model, self.pos)


Context = tuple[int, ...]


class AdaptiveMarkovModel(ConditionalModel):
    """Order-``k`` Markov model with add-one smoothing and online count updates.

    ``counts`` maps a context (the preceding ``k`` symbols, or fewer at the
    start of a sequence) to raw next-symbol counts. A stream starts from these
    counts and, when ``adaptive`` is set, adds one to the count of every
    symbol it emits, after that symbol's table has been used.

    A context tag primes the history: its bytes are mapped to symbols (through
    ``labels`` when they match, else modulo the alphabet size) and act as the
    symbols preceding the sequence.
    """

    def __init__(
        self,
        alphabet_size: int,
        order: int,
        counts: Mapping[Context, Sequence[int]] | None = None,
        width: int = DEFAULT_WIDTH,
        labels: bytes | None = None,
        adaptive: bool = True,
    ):
        if alphabet_size < 2:
            raise ValueError("alphabet size must be at least 2")
        if order < 0:
            raise ValueError("order must be non-negative")
        if not alphabet_size <= width <= MAX_TOTAL:
            raise ValueError(f"width must lie in [{alphabet_size}, {MAX_TOTAL}]")
        if labels is not None:
            labels = bytes(labels)
            if len(labels) != alphabet_size or len(set(labels)) != alphabet_size:
                raise ValueError("labels must be unique, one per symbol")
        self.alphabet_size = alphabet_size
        self.order = order
        self.width = width
        self.labels = labels
        self.adaptive = adaptive
        frozen: dict[Context, tuple[int, ...]] = {}
        for ctx, row in (counts or {}).items():
            ctx = tuple(ctx)
            row = tuple(int(c) for c in row)
            if len(ctx) > order or any(not 0 <= s < alphabet_size for s in ctx):
                raise ValueError(f"invalid context {ctx}")
            if len(row) != alphabet_size or min(row) < 0:
                raise ValueError(f"invalid count row for context {ctx}")
            frozen[ctx] = row
        self.counts = frozen
        self._cache: dict[Context, FrequencyTable] = {}
        self._uniform = quantize_counts([1] * alphabet_size, width)

    def quantized(self, ctx: Context) -> FrequencyTable:
        """Table for ``ctx`` from the trained counts alone."""
        table = self._cache.get(ctx)
        if table is None:
            row = self.counts.get(ctx)
            if row is None:
                table = self._uniform
            else:
                table = quantize_counts([c + 1 for c in row], self.width)
            self._cache[ctx] = table
        return table

    def prime(self, context: bytes) -> Context:
        if not context or not self.order:
            return ()
        index = {b: i for i, b in enumerate(self.labels)} if self.labels else {}
        symbols = [index.get(b, b % self.alphabet_size) for b in context]
        return tuple(symbols[-self.order :])

    def start(self, context: bytes = b"") -> "_MarkovStream":
        return _MarkovStream(self, self.prime(context), {})

    def __eq__(self, other):
        return (
            isinstance(other, AdaptiveMarkovModel)
            and (self.alphabet_size, self.order, self.width, self.labels, self.adaptive)
            == (other.alphabet_size, other.order, other.width, other.labels, other.adaptive)
            and self.counts == other.counts
        )

    def __repr__(self):
        return (
            f"AdaptiveMarkovModel(alphabet_size={self.alphabet_size}, order={self.order}, "
            f"contexts={len(self.counts)}, width={self.width})"
        )


class _MarkovStream(ModelStream):
    __slots__ = ("model", "history", "overlay", "_tables")

    def __init__(self, model: AdaptiveMarkovModel, history: Context, overlay: dict):
        self.model = model
        self.history = history
        # copy-on-write smoothed counts for contexts this stream has updated
        self.overlay: dict[Context, list[int]] = overlay
        self._tables: dict[Context, FrequencyTable] = {}

    def table(self):
        ctx = self.history
        row = self.overlay.get(ctx)
        if row is None:
            return self.model.quantized(ctx)
        table = self._tables.get(ctx)
        if table is None:
            table = FrequencyTable._trusted(_apportion(row, self.model.width))
            self._tables[ctx] = table
        return table

    def push(self, symbol):
        model = self.model
        ctx = self.history
        if model.adaptive:
            row = self.overlay.get(ctx)
            if row is None:
                base = model.counts.get(ctx)
                row = [c + 1 for c in base] if base is not None else [1] * model.alphabet_size
                self.overlay[ctx] = row
            row[symbol] += 1
            self._tables.pop(ctx, None)
        if model.order:
            ctx = ctx + (symbol,)
            if len(ctx) > model.order:
                ctx = ctx[1:]
            self.history = ctx

    def clone(self):
        twin = _MarkovStream(self.model, self.history, {k: list(v) for k, v in self.overlay.items()})
        twin._tables = dict(self._tables)
        return twin


def train_markov(
    corpus: Sequence[int],
    order: int,
    alphabet_size: int | None = None,
    width: int = DEFAULT_WIDTH,
    labels: bytes | None = None,
    adaptive: bool = True,
) -> AdaptiveMarkovModel:
    """Count n-grams of ``corpus``: context ``corpus[i-k:i]`` (shorter at the start) to ``corpus[i]``."""
    if len(corpus) <= order:
        raise ValueError(f"corpus of length {len(corpus)} too short for order {order}")
    if alphabet_size is None:
        alphabet_size = max(max(corpus) + 1, 2)
    rows: dict[Context, list[int]] = {}
    for i, symbol in enumerate(corpus):
        if not 0 <= symbol < alphabet_size:
            raise ValueError(f"symbol {symbol} outside alphabet of size {alphabet_size}")
        ctx = tuple(corpus[max(0, i - order) : i])
        row = rows.get(ctx)
        if row is None:
            row = rows[ctx] = [0] * alphabet_size
        row[symbol] += 1
    return AdaptiveMarkovModel(alphabet_size, order, rows, width=width, labels=labels, adaptive=adaptive)


def train_markov_bytes(data: bytes, order: int, width: int = DEFAULT_WIDTH) -> AdaptiveMarkovModel:
    """Train on raw bytes over the alphabet of byte values that actually occur."""
    labels = bytes(sorted(set(data)))
    if len(labels) < 2:
        raise ValueError("corpus needs at least two distinct byte values")
    index = {b: i for i, b in enumerate(labels)}
    return train_markov([index[b] for b in data], order, len(labels), width=width, labels=labels)


@dataclass(frozen=True)
class EntropyEstimate:
    bits_per_symbol: float
    stderr: float
    horizon: int
    trials: int


def sample(model: ConditionalModel, n: int, rng: random.Random, context: bytes = b"") -> tuple[list[int], float]:
    """Draw ``n`` symbols from ``model``; returns them with their total surprisal in bits."""
    stream = model.start(context)
    out = []
    surprisal = 0.0
    for _ in range(n):
        t = stream.table()
        cum = t.cumulative_counts
        j = bisect_right(cum, rng.randrange(cum[-1])) - 1
        surprisal -= math.log2(t.counts[j] / cum[-1])
        out.append(j)
        stream.push(j)
    return out, surprisal


def entropy_rate(model: ConditionalModel, n: int, trials: int = 8, seed: int = 0, context: bytes = b"") -> EntropyEstimate:
    """Monte-Carlo estimate of the per-symbol entropy over sequences of length ``n``."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    rng = random.Random(seed)
    rates = [sample(model, n, rng, context)[1] / n for _ in range(trials)]
    mean = math.fsum(rates) / trials
    stderr = statistics.stdev(rates) / math.sqrt(trials) if trials > 1 else 0.0
    return EntropyEstimate(mean, stderr, n, trials)


def table_entropy(table: FrequencyTable) -> float:
    """Shannon entropy of one table in bits."""
    total = table.total
    return -math.fsum(c / total * math.log2(c / total) for c in table.counts)
