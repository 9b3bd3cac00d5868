import ast
import copy
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import genstego.coder as coder_mod
import genstego.exact as exact_mod
from genstego.bits import BitSource, bits_to_int, int_to_bits
from genstego.coder import (
    MAX_TOTAL,
    PAPER,
    PRG,
    CoderState,
    Decoder,
    Encoder,
    FrequencyTable,
    cumulative,
    embed_aad,
    extract_aae,
    refine,
)
from genstego.errors import AmbiguousStegoError, EntropyExhaustedError, ExtractionError, InvalidTableError
from genstego.exact import RationalInterval, exact_embed, exact_extract, exact_intervals
from genstego.models import StaticModel, train_markov

import oracles

SCHEDULE = [(40, 10, 50), (25, 25, 50), (50, 25, 25)]


@pytest.fixture
def schedule_model():
    return StaticModel([FrequencyTable(c) for c in SCHEDULE])


@pytest.fixture
def ternary():
    return StaticModel(FrequencyTable((40, 10, 50)))


def _markov(seed=3, alphabet=5, order=2, n=400):
    r = random.Random(seed)
    return train_markov([r.randrange(alphabet) for _ in range(n)], order, alphabet)


# frequency tables


def test_table_cumulative():
    t = FrequencyTable((40, 10, 50))
    assert t.cumulative_counts == (0, 40, 50, 100)
    assert t.total == 100 and t.alphabet_size == 3
    assert cumulative(t, 2) == 50
    assert t.probability(1) == Fraction(1, 10)
    with pytest.raises(IndexError):
        cumulative(t, 4)


@pytest.mark.parametrize("counts", [(5,), (3, 0, 2), (MAX_TOTAL, 1), (-1, 4)])
def test_table_rejects_invalid(counts):
    with pytest.raises(InvalidTableError):
        FrequencyTable(counts)


def test_uniform_table():
    assert FrequencyTable.uniform(4).counts == (1, 1, 1, 1)


# the worked example


def test_worked_example_embed(schedule_model):
    assert embed_aad([0, 1, 0], schedule_model) == [0, 2, 0]
    assert exact_embed([0, 1, 0], schedule_model) == [0, 2, 0]


def test_worked_example_intervals(schedule_model):
    ivs = exact_intervals([0, 2, 0], schedule_model)
    got = [(iv.low, iv.high) for iv in ivs]
    F = Fraction
    assert got == [(F(0), F(1)), (F(0), F(2, 5)), (F(1, 5), F(2, 5)), (F(1, 5), F(3, 10))]
    # independent transcription agrees
    ys, visited = oracles.embed_paper([0, 1, 0], lambda h: oracles.fractions_of(SCHEDULE[len(h)]))
    assert ys == [0, 2, 0] and visited == got


def test_worked_example_extract(schedule_model):
    assert extract_aae([0, 2, 0], schedule_model, 3) == [0, 1, 0]
    assert exact_extract([0, 2, 0], schedule_model, 3) == [0, 1, 0]


def test_schedule_budget(schedule_model):
    with pytest.raises(EntropyExhaustedError):
        embed_aad([1] * 12, schedule_model)
    with pytest.raises(EntropyExhaustedError):
        exact_embed([1] * 12, schedule_model)


# determinism and absence of floating point


@pytest.mark.parametrize("module", [coder_mod, exact_mod])
def test_no_float_literals(module):
    tree = ast.parse(Path(module.__file__).read_text())
    floats = [n.value for n in ast.walk(tree) if isinstance(n, ast.Constant) and isinstance(n.value, float)]
    names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    assert not floats and "float" not in names


def test_deterministic(ternary):
    bits = [random.Random(7).getrandbits(1) for _ in range(300)]
    assert embed_aad(bits, ternary) == embed_aad(bits, ternary)
    a = embed_aad(bits, ternary, mode=PRG, n_target=300, key=b"k")
    assert a == embed_aad(bits, ternary, mode=PRG, n_target=300, key=b"k")


# fixed-precision coder against the exact coder


def test_eight_bit_table_matches_exact(ternary):
    # every 8-bit message produces the same stego on both coders
    for m in range(256):
        bits = int_to_bits(m, 8)
        ys = embed_aad(bits, ternary)
        assert ys == exact_embed(bits, ternary)
        assert ys == oracles.embed_paper(bits, oracles.static_schedule((40, 10, 50)))[0]
        assert extract_aae(ys, ternary, 8) == bits


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=24), st.integers(0, 50))
def test_short_messages_match_exact(bits, seed):
    # while the interval is wider than the register resolution the coders agree
    model = _markov(seed)
    assert embed_aad(bits, model) == exact_embed(bits, model)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=400), st.integers(0, 50))
def test_interval_width_tracks_probability(bits, seed):
    model = _markov(seed)
    ys = embed_aad(bits, model)
    enc = Encoder()
    stream = model.start()
    for y in ys:
        enc.encode(stream.table(), y)
        stream.push(y)
    lo, hi = enc.interval()
    ratio = (hi - lo) / model.sequence_probability(ys)
    # each step loses at most total / range <= 2**-14 relative width
    assert abs(float(ratio) - 1) <= len(ys) * 2.0**-13


def test_children_tile_parent():
    # the integer narrowing leaves neither gaps nor overlaps between siblings
    model = _markov(11)
    stream = model.start()
    enc = Encoder()
    for y in [0, 3, 1, 4, 2, 2, 0, 1] * 3:
        table = stream.table()
        parent = enc.interval()
        kids = []
        for j in range(table.alphabet_size):
            kid = copy.deepcopy(enc)
            kid.encode(table, j)
            kids.append(kid.interval())
        assert kids[0][0] == parent[0] and kids[-1][1] == parent[1]
        assert all(a[1] == b[0] and a[0] < a[1] for a, b in zip(kids, kids[1:]))
        enc.encode(table, y)
        stream.push(y)


def test_refine_matches_encoder():
    model = _markov(5)
    stream = model.start()
    enc = Encoder()
    state = CoderState()
    for y in [1, 1, 4, 0, 2, 3, 3, 3, 1, 0] * 5:
        t = stream.table()
        enc.encode(t, y)
        state = refine(state, t, y)
        stream.push(y)
        assert (state.low, state.high, state.pending) == (enc.low, enc.high, enc.pending)
        assert state.bits_emitted == len(enc.sink)


def test_class_decoder_matches_inline_loop():
    model = _markov(9)
    bits = [random.Random(1).getrandbits(1) for _ in range(500)]
    fast = embed_aad(bits, model)
    dec = Decoder(BitSource.zero_extended(bits))
    stream = model.start()
    slow = []
    while not dec.pins_fraction(len(bits)):
        j = dec.decode(stream.table())
        slow.append(j)
        stream.push(j)
    assert slow == fast
    # encoder replay lands on the same exact interval
    enc = Encoder()
    stream = model.start()
    for y in slow:
        enc.encode(stream.table(), y)
        stream.push(y)
    lo, hi, e = dec.scaled_interval()
    elo, ehi, ee = enc.scaled_interval()
    assert Fraction(lo, 1 << e) == Fraction(elo, 1 << ee)
    assert Fraction(hi, 1 << e) == Fraction(ehi, 1 << ee)


# termination rule


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=200), st.integers(0, 20))
def test_final_interval_holds_one_fraction(bits, seed):
    model = _markov(seed, alphabet=3, order=1)
    ys = embed_aad(bits, model)
    enc = Encoder()
    stream = model.start()
    for y in ys:
        enc.encode(stream.table(), y)
        stream.push(y)
    lo, hi = enc.interval()
    iv = RationalInterval(lo, hi)
    L = len(bits)
    assert iv.dyadic_count(L) == 1
    assert iv.contains(Fraction(bits_to_int(bits), 1 << L))
    # one symbol fewer would still be ambiguous
    if ys:
        enc2 = Encoder()
        stream = model.start()
        for y in ys[:-1]:
            enc2.encode(stream.table(), y)
            stream.push(y)
        assert RationalInterval(*enc2.interval()).dyadic_count(L) > 1


def test_empty_message(ternary):
    assert embed_aad([], ternary) == []
    assert extract_aae([], ternary, 0) == []


def test_uniform_binary_is_identity():
    model = StaticModel(FrequencyTable((1, 1)))
    bits = [random.Random(2).getrandbits(1) for _ in range(100)]
    assert embed_aad(bits, model) == bits
    assert extract_aae(bits, model, 100) == bits


# round trips


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=600), st.integers(0, 30), st.sampled_from([PAPER, PRG]))
def test_round_trip(bits, seed, mode):
    model = _markov(seed, alphabet=2 + seed % 6, order=seed % 3)
    if mode == PAPER:
        ys = embed_aad(bits, model)
    else:
        ys = embed_aad(bits, model, mode=PRG, n_target=len(bits) + 40, key=bytes([seed]))
        assert len(ys) == len(bits) + 40
    assert extract_aae(ys, model, len(bits), mode) == bits


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=40), st.integers(0, 10), st.sampled_from([PAPER, PRG]))
def test_exact_round_trip(bits, seed, mode):
    model = _markov(seed, alphabet=3, order=1)
    kw = {"mode": PRG, "n_target": len(bits) + 30, "key": b"x"} if mode == PRG else {}
    ys = exact_embed(bits, model, **kw)
    assert exact_extract(ys, model, len(bits), mode) == bits


def test_prg_padding_differs_by_key(ternary):
    bits = [1, 0, 1, 1]
    a = embed_aad(bits, ternary, mode=PRG, n_target=50, key=b"a")
    b = embed_aad(bits, ternary, mode=PRG, n_target=50, key=b"b")
    assert a != b
    assert extract_aae(a, ternary, 4, PRG) == extract_aae(b, ternary, 4, PRG) == bits


def test_prg_needs_enough_symbols(ternary):
    with pytest.raises(EntropyExhaustedError):
        embed_aad([1] * 64, ternary, mode=PRG, n_target=5, key=b"k")
    with pytest.raises(ValueError):
        embed_aad([1], ternary, mode=PRG)


def test_prg_matches_exact_on_short_inputs(ternary):
    for m in range(16):
        bits = int_to_bits(m, 4)
        a = embed_aad(bits, ternary, mode=PRG, n_target=12, key=b"pad")
        assert a == exact_embed(bits, ternary, mode=PRG, n_target=12, key=b"pad")


def test_truncated_stego_is_ambiguous():
    model = _markov(4)
    bits = [random.Random(4).getrandbits(1) for _ in range(200)]
    ys = embed_aad(bits, model)
    with pytest.raises(AmbiguousStegoError):
        extract_aae(ys[: len(ys) // 2], model, 200)
    with pytest.raises(AmbiguousStegoError):
        exact_extract(ys[:3], model, 200)


def test_bad_symbol_rejected(ternary):
    with pytest.raises(ExtractionError):
        extract_aae([0, 3], ternary, 2)


def test_wrong_model_gives_other_bits():
    a, b = _markov(1), _markov(2)
    bits = [random.Random(5).getrandbits(1) for _ in range(128)]
    ys = embed_aad(bits, a)
    try:
        assert extract_aae(ys, b, 128) != bits
    except ExtractionError:
        pass


def test_unknown_mode(ternary):
    with pytest.raises(ValueError):
        embed_aad([1], ternary, mode="nope")
    with pytest.raises(ValueError):
        extract_aae([1], ternary, 1, mode="nope")
