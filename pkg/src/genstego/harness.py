"""Executable security checks.

Exhaustive cover and stego distributions computed in exact rational
arithmetic, the divergence bound against ``2/n``, empirical embedding rates,
Kolmogorov-Smirnov normality tests for the latent modulator, and the keyed
rejection-sampling stegosystem used as a low-capacity baseline.
"""

from __future__ import annotations

import csv
import hashlib
import hmac
import io
import math
import random
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .bits import bits_to_int, int_to_bits
from .coder import MODES, PAPER, embed_aad
from .errors import EntropyExhaustedError, StateSpaceError
from .exact import RationalInterval, _ceil
from .latent import normal_cdf
from .models import ConditionalModel, ModelStream, entropy_rate

MAX_SEQUENCES = 10**6
MAX_MESSAGE_BITS = 20


class SequenceDistribution(Mapping):
    """Exact law over symbol sequences; masses are fractions summing to one."""

    def __init__(self, masses: Mapping[tuple[int, ...], Fraction], check: bool = True):
        self._masses = {tuple(k): Fraction(v) for k, v in masses.items() if v}
        if check:
            total = sum(self._masses.values(), Fraction(0))
            if total != 1:
                raise ValueError(f"masses sum to {total}, not 1")
            if any(v < 0 for v in self._masses.values()):
                raise ValueError("negative mass")

    def __getitem__(self, key):
        return self._masses.get(tuple(key), Fraction(0))

    def __iter__(self):
        return iter(self._masses)

    def __len__(self):
        return len(self._masses)

    def __contains__(self, key):
        return tuple(key) in self._masses

    def __eq__(self, other):
        if isinstance(other, SequenceDistribution):
            return self._masses == other._masses
        return NotImplemented

    def __repr__(self):
        return f"SequenceDistribution({len(self)} sequences)"

    def expected_length(self) -> Fraction:
        return sum((len(y) * p for y, p in self._masses.items()), Fraction(0))

    def lengths(self) -> tuple[int, int]:
        sizes = [len(y) for y in self._masses]
        return min(sizes), max(sizes)


def _check_space(model: ConditionalModel, n: int, limit: int) -> None:
    if model.alphabet_size**n > limit:
        raise StateSpaceError(
            f"{model.alphabet_size}**{n} sequences exceed the enumeration guard of {limit}"
        )


def _walk(stream: ModelStream, n: int, prefix: tuple[int, ...], mass: Fraction, out: dict) -> None:
    if len(prefix) == n:
        out[prefix] = mass
        return
    table = stream.table()
    total = table.total
    for j, c in enumerate(table.counts):
        child = stream.clone()
        child.push(j)
        _walk(child, n, prefix + (j,), mass * Fraction(c, total), out)


def cover_distribution(
    model: ConditionalModel, n: int, context: bytes = b"", limit: int = MAX_SEQUENCES
) -> SequenceDistribution:
    """Product-of-conditionals law of all length-``n`` sequences."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if model.max_length is not None and n > model.max_length:
        raise EntropyExhaustedError(f"model describes at most {model.max_length} symbols")
    _check_space(model, n, limit)
    out: dict = {}
    _walk(model.start(context), n, (), Fraction(1), out)
    return SequenceDistribution(out)


def cover_on_support(model: ConditionalModel, support: Iterable[Sequence[int]], context: bytes = b"") -> SequenceDistribution:
    """Cover law restricted to a prefix-free ``support`` and renormalized."""
    masses = {tuple(y): model.sequence_probability(y, context) for y in support}
    z = sum(masses.values(), Fraction(0))
    return SequenceDistribution({y: p / z for y, p in masses.items()})


def _paper_masses(model, length, context, first, stop, budget):
    """Stego masses of messages ``first..stop-1`` by walking the interval tree.

    A node is a leaf as soon as it holds at most one ``length``-bit fraction,
    which is exactly where the embedder stops for every message inside it.
    """
    scale = 1 << length
    unit = Fraction(1, scale)
    out: dict = {}
    todo = [(RationalInterval(), model.start(context), ())]
    while todo:
        iv, stream, prefix = todo.pop()
        lo_k = _ceil(iv.low * scale)
        hi_k = _ceil(iv.high * scale)
        mine = min(hi_k, stop) - max(lo_k, first)
        if mine <= 0:
            continue
        if hi_k - lo_k <= 1:
            out[prefix] = unit
            continue
        if budget is not None and len(prefix) >= budget:
            raise EntropyExhaustedError(f"model budget of {budget} symbols exhausted with {length} message bits")
        table = stream.table()
        for j in range(table.alphabet_size):
            child = stream.clone()
            child.push(j)
            todo.append((iv.refine(table, j), child, prefix + (j,)))
    return out


def _prg_masses(model, length, n_target, context, first, stop):
    """Stego masses for message cells ``first..stop-1`` with uniform padding.

    Message ``m`` fixes ``q`` to the cell ``[m, m + 1) / 2**length``; the
    padding makes ``q`` uniform there, so sequence ``y`` receives the measure
    of its interval intersected with the cell.
    """
    out: dict = {}
    for m in range(first, stop):
        cell_lo = Fraction(m, 1 << length)
        cell_hi = Fraction(m + 1, 1 << length)
        todo = [(RationalInterval(), model.start(context), ())]
        while todo:
            iv, stream, prefix = todo.pop()
            lo, hi = max(iv.low, cell_lo), min(iv.high, cell_hi)
            if lo >= hi:
                continue
            if len(prefix) == n_target:
                out[prefix] = out.get(prefix, Fraction(0)) + (hi - lo)
                continue
            table = stream.table()
            for j in range(table.alphabet_size):
                child = stream.clone()
                child.push(j)
                todo.append((iv.refine(table, j), child, prefix + (j,)))
    return out


def _merge(parts: Iterable[dict]) -> dict:
    out: dict = {}
    for part in parts:
        for y, p in part.items():
            out[y] = out.get(y, Fraction(0)) + p
    return out


def _chunks(total: int, workers: int) -> list[tuple[int, int]]:
    step = -(-total // workers)
    return [(a, min(a + step, total)) for a in range(0, total, step)]


def induced_stego_distribution(
    model: ConditionalModel,
    length: int,
    mode: str = PAPER,
    n_target: int | None = None,
    context: bytes = b"",
    workers: int = 1,
    limit: int = MAX_SEQUENCES,
) -> SequenceDistribution:
    """Exact law of the emitted sequence when the message is uniform on ``length`` bits.

    Parameters
    ----------
    model : ConditionalModel
        Shared model.
    length : int
        Message length ``L``; at most 20.
    mode : {"paper", "prg"}
        Termination rule of the embedder.
    n_target : int, optional
        Fixed stego length for ``"prg"`` mode; defaults to ``length``.
    workers : int
        Processes sharing the message space; partial masses are summed.

    Notes
    -----
    In ``"prg"`` mode the law is that of the emitted symbols with ideal
    padding. Sequences whose interval straddles two message cells are kept
    (the embedder refuses them only after the symbols are drawn), so the
    result is comparable with :func:`cover_distribution`.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 <= length <= MAX_MESSAGE_BITS:
        raise StateSpaceError(f"message length {length} outside 0..{MAX_MESSAGE_BITS}")
    if mode == PAPER:
        budget = model.max_length
        job = lambda a, b: (_paper_masses, (model, length, context, a, b, budget))  # noqa: E731
    else:
        n_target = length if n_target is None else n_target
        if model.max_length is not None and n_target > model.max_length:
            raise EntropyExhaustedError(f"n_target {n_target} exceeds model budget {model.max_length}")
        _check_space(model, n_target, limit)
        job = lambda a, b: (_prg_masses, (model, length, n_target, context, a, b))  # noqa: E731
    jobs = [job(a, b) for a, b in _chunks(1 << length, max(1, workers))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_job, jobs))
    else:
        parts = [_run_job(j) for j in jobs]
    out = _merge(parts)
    if len(out) > limit:
        raise StateSpaceError(f"{len(out)} stego sequences exceed the enumeration guard of {limit}")
    return SequenceDistribution(out)


def _run_job(job):
    fn, args = job
    return fn(*args)


def _log2(x: Fraction) -> float:
    # log2 of numerator and denominator separately keeps huge ratios finite
    return math.log2(x.numerator) - math.log2(x.denominator)


def kl_divergence(p: Mapping, q: Mapping) -> float:
    """Relative entropy ``sum P log2(P/Q)`` in bits; ``inf`` when ``P`` escapes ``Q``.

    Exact ``Fraction`` masses keep every ratio exact before the logarithm.
    Plain floats are accepted too.
    """
    terms = []
    for y, pv in p.items():
        if not pv:
            continue
        qv = q.get(y, 0)
        if not qv:
            return math.inf
        if pv == qv:
            continue
        if isinstance(pv, Fraction) or isinstance(qv, Fraction):
            terms.append(float(pv) * _log2(Fraction(pv) / Fraction(qv)))
        else:
            terms.append(pv * math.log2(pv / qv))
    return max(0.0, math.fsum(terms))


@dataclass(frozen=True)
class BoundReport:
    """Divergence of one message length against the ``2/n`` bound.

    ``kl_value`` is the divergence per emitted symbol, ``kl_total`` the
    divergence between whole sequences, and ``n`` the expected emitted
    length under the stego law.
    """

    L: int
    n: float
    kl_value: float
    kl_total: float
    min_len: int
    max_len: int
    mode: str = PAPER
    cover_mass: float = 1.0

    @property
    def bound(self) -> float:
        return 2.0 / self.n if self.n > 0 else math.inf

    @property
    def satisfied(self) -> bool:
        return self.kl_value < self.bound


def bound_report(
    model: ConditionalModel,
    length: int,
    mode: str = PAPER,
    n_target: int | None = None,
    context: bytes = b"",
    workers: int = 1,
) -> BoundReport:
    stego = induced_stego_distribution(model, length, mode, n_target, context, workers)
    if mode == PAPER:
        raw = {y: model.sequence_probability(y, context) for y in stego}
        z = sum(raw.values(), Fraction(0))
        cover = SequenceDistribution({y: v / z for y, v in raw.items()})
    else:
        n_target = length if n_target is None else n_target
        cover = cover_distribution(model, n_target, context)
        z = Fraction(1)
    n = stego.expected_length()
    total = kl_divergence(cover, stego)
    lo, hi = stego.lengths()
    return BoundReport(length, float(n), total / float(n) if n else 0.0, total, lo, hi, mode, float(z))


def verify_kl_bound(
    model: ConditionalModel,
    L_list: Sequence[int],
    mode: str = PAPER,
    n_target: int | None = None,
    context: bytes = b"",
    workers: int = 1,
) -> list[BoundReport]:
    """One :class:`BoundReport` per message length."""
    return [bound_report(model, L, mode, n_target, context, workers) for L in L_list]


def non_increasing(reports: Sequence[BoundReport]) -> bool:
    values = [r.kl_value for r in sorted(reports, key=lambda r: r.L)]
    return all(b <= a for a, b in zip(values, values[1:]))


REPORT_FIELDS = ("L", "n", "kl_value", "kl_total", "bound", "satisfied", "min_len", "max_len", "mode", "cover_mass")


def reports_to_csv(reports: Sequence[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow([
            r.L, repr(r.n), repr(r.kl_value), repr(r.kl_total), repr(r.bound),
            int(r.satisfied), r.min_len, r.max_len, r.mode, repr(r.cover_mass),
        ])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[BoundReport]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        BoundReport(
            int(r["L"]), float(r["n"]), float(r["kl_value"]), float(r["kl_total"]),
            int(r["min_len"]), int(r["max_len"]), r["mode"], float(r["cover_mass"]),
        )
        for r in rows
    ]


def format_reports(reports: Sequence[BoundReport]) -> str:
    lines = [f"{'L':>3} {'mode':>5} {'n':>8} {'kl/symbol':>12} {'kl total':>12} {'2/n':>9} {'len':>9}  ok"]
    for r in reports:
        lines.append(
            f"{r.L:>3} {r.mode:>5} {r.n:>8.3f} {r.kl_value:>12.6g} {r.kl_total:>12.6g} "
            f"{r.bound:>9.5f} {f'{r.min_len}..{r.max_len}':>9}  {'yes' if r.satisfied else 'NO'}"
        )
    lines.append(f"non-increasing in L: {'yes' if non_increasing(reports) else 'no'}")
    return "\n".join(lines)


@dataclass(frozen=True)
class RateReport:
    n: int
    trials: int
    mean_rate: float
    stderr: float
    entropy: float
    entropy_stderr: float
    rates: tuple[float, ...]

    @property
    def tolerance(self) -> float:
        return 3.0 * math.hypot(self.stderr, self.entropy_stderr)

    @property
    def lower(self) -> float:
        return self.entropy - self.tolerance

    @property
    def upper(self) -> float:
        return self.entropy + 2.0 / self.n + self.tolerance

    @property
    def within(self) -> bool:
        return self.lower <= self.mean_rate <= self.upper


def rate_report(
    model: ConditionalModel,
    n: int,
    trials: int = 8,
    seed: int = 0,
    context: bytes = b"",
    entropy: float | None = None,
) -> RateReport:
    """Embedded message bits per emitted symbol around horizon ``n``.

    Each trial embeds ``floor(n * H)`` uniform bits in paper mode, ``H`` being
    the entropy rate (estimated by sampling unless given), and divides by the
    number of symbols emitted.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    if entropy is None:
        est = entropy_rate(model, n, trials, seed, context)
        entropy, h_err = est.bits_per_symbol, est.stderr
    else:
        h_err = 0.0
    length = max(1, int(n * entropy))
    rng = random.Random(seed ^ 0x5EED)
    rates = []
    for _ in range(trials):
        bits = int_to_bits(rng.getrandbits(length), length)
        out = embed_aad(bits, model, mode=PAPER, context=context)
        rates.append(length / len(out))
    mean = math.fsum(rates) / trials
    stderr = float(np.std(rates, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return RateReport(n, trials, mean, stderr, entropy, h_err, tuple(rates))


def _object_bytes(obj) -> bytes:
    if isinstance(obj, (bytes, bytearray, memoryview)):
        return bytes(obj)
    if isinstance(obj, str):
        return obj.encode("utf-8")
    if isinstance(obj, (int, np.integer)):
        v = int(obj)
        return v.to_bytes((v.bit_length() + 8) // 8 or 1, "big", signed=True)
    if isinstance(obj, np.ndarray):
        return obj.tobytes()
    return repr(obj).encode("utf-8")


def keyed_hash(key: bytes, e: int) -> Callable[[object], int]:
    """``f_k``: HMAC-SHA256 of the object's bytes, truncated to its top ``e`` bits."""
    if not 1 <= e <= 8:
        raise ValueError("e must be in 1..8")

    def f(obj) -> int:
        return hmac.new(key, _object_bytes(obj), hashlib.sha256).digest()[0] >> (8 - e)

    return f


@dataclass(frozen=True)
class BaselineResult:
    objects: tuple
    draws: tuple[int, ...]
    e: int

    @property
    def mean_draws(self) -> float:
        return math.fsum(self.draws) / len(self.draws) if self.draws else 0.0

    @property
    def bits_per_object(self) -> int:
        return self.e


def _groups(bits: Sequence[int], e: int) -> Iterator[int]:
    bits = list(bits)
    bits += [0] * ((-len(bits)) % e)
    for i in range(0, len(bits), e):
        yield bits_to_int(bits[i : i + e])


def rejection_sample_baseline(
    key: bytes,
    bits: Sequence[int],
    sampler: Callable[[], object],
    e: int,
    f: Callable[[object], int] | None = None,
    max_draws: int = 1 << 16,
) -> BaselineResult:
    """Hide ``e`` bits per object by redrawing until ``f_k(s)`` equals them.

    Raises :class:`EntropyExhaustedError` when a group needs more than
    ``max_draws`` draws, which means the sampler cannot reach that hash value.
    """
    f = f or keyed_hash(key, e)
    objects, draws = [], []
    for b in _groups(bits, e):
        for count in range(1, max_draws + 1):
            s = sampler()
            if f(s) == b:
                break
        else:
            raise EntropyExhaustedError(f"no object hashed to {b:0{e}b} within {max_draws} draws")
        objects.append(s)
        draws.append(count)
    return BaselineResult(tuple(objects), tuple(draws), e)


def rejection_sample_recover(
    key: bytes, objects: Iterable[object], e: int, length: int, f: Callable[[object], int] | None = None
) -> list[int]:
    f = f or keyed_hash(key, e)
    out: list[int] = []
    for s in objects:
        out.extend(int_to_bits(f(s), e))
    return out[:length]


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n: float


def kolmogorov_sf(x: float) -> float:
    """Survival function of the limiting Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    if x < 1.18:
        # theta-function form converges fast for small arguments
        t = math.pi**2 / (8 * x * x)
        cdf = math.sqrt(2 * math.pi) / x * math.fsum(math.exp(-(2 * k - 1) ** 2 * t) for k in range(1, 8))
        return min(1.0, max(0.0, 1.0 - cdf))
    return min(1.0, max(0.0, 2 * math.fsum((-1) ** (k - 1) * math.exp(-2 * k * k * x * x) for k in range(1, 101))))


def _scaled_pvalue(d: float, n: float) -> float:
    # Stephens' small-sample correction of the asymptotic argument
    root = math.sqrt(n)
    return kolmogorov_sf((root + 0.12 + 0.11 / root) * d)


def ks_normal_test(samples) -> KSResult:
    """One-sample KS test against the standard normal with asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    n = x.size
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    cdf = normal_cdf(x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    return KSResult(d, _scaled_pvalue(d, n), n)


def ks_two_sample(a, b) -> KSResult:
    """Two-sample KS test with asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size < 100 or b.size < 100:
        raise ValueError("need at least 100 samples in each group")
    grid = np.concatenate((a, b))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    en = a.size * b.size / (a.size + b.size)
    return KSResult(d, _scaled_pvalue(d, en), en)
