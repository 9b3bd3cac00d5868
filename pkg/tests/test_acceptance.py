"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line summary; ``conftest.py`` prints a PASS/FAIL
line per criterion at the end of the run.
"""

import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from genstego.bits import int_to_bits
from genstego.coder import PAPER, PRG, FrequencyTable, embed_aad, extract_aae
from genstego.errors import EntropyExhaustedError
from genstego.exact import exact_embed, exact_extract, exact_intervals
from genstego.harness import (
    cover_distribution,
    induced_stego_distribution,
    keyed_hash,
    kl_divergence,
    ks_normal_test,
    non_increasing,
    rate_report,
    rejection_sample_baseline,
    rejection_sample_recover,
    reports_from_csv,
    verify_kl_bound,
)
from genstego.latent import ToyFlow, demodulate, modulate
from genstego.models import StaticModel, entropy_rate, quantize_counts, train_markov

pytestmark = pytest.mark.acceptance

GOLDENS = Path(__file__).parent / "goldens"
TERNARY = (40, 10, 50)
TERNARY_ENTROPY = 1.361


def _detail(record_property, text):
    record_property("detail", text)
    print(text)


@pytest.mark.criterion(1, "worked example")
def test_criterion_1_worked_example(record_property):
    model = StaticModel([FrequencyTable(c) for c in [(40, 10, 50), (25, 25, 50), (50, 25, 25)]])
    ys = embed_aad([0, 1, 0], model)
    ivs = exact_intervals(ys, model)
    F = Fraction
    assert ys == [0, 2, 0]
    assert exact_embed([0, 1, 0], model) == [0, 2, 0]
    assert [(iv.low, iv.high) for iv in ivs[1:]] == [(F(0), F(2, 5)), (F(1, 5), F(2, 5)), (F(1, 5), F(3, 10))]
    assert extract_aae(ys, model, 3) == [0, 1, 0]
    assert exact_extract(ys, model, 3) == [0, 1, 0]
    best = math.inf
    for _ in range(200):
        t = time.perf_counter()
        extract_aae(embed_aad([0, 1, 0], model), model, 3)
        best = min(best, time.perf_counter() - t)
    _detail(record_property, f"[0,2,0], intervals exact, embed+extract {best * 1e6:.0f} us")
    assert best < 1e-3


def _round_trip_models(rng):
    models = []
    for _ in range(6):
        k = rng.randrange(2, 17)
        weights = [rng.randrange(1, 100) for _ in range(k)]
        models.append(StaticModel(quantize_counts(weights, rng.choice([256, 4096, 1 << 14]))))
    models.append(StaticModel(FrequencyTable(TERNARY)))
    models.append(StaticModel(FrequencyTable((1, 1))))
    for order in (0, 1, 2, 3):
        for alphabet in (4, 16, 64):
            corpus = [min(int(rng.expovariate(0.3)), alphabet - 1) for _ in range(3000)]
            models.append(train_markov(corpus, order, alphabet))
    return models


def _message_length(rng):
    # mostly short messages, a log-uniform tail up to 4 KiB
    if rng.random() < 0.9:
        return rng.randrange(0, 257)
    return int(math.exp(rng.uniform(math.log(256), math.log(32768))))


@pytest.mark.criterion(2, "round trip, 10^4 cases")
def test_criterion_2_round_trip(record_property):
    rng = random.Random(20240601)
    models = _round_trip_models(rng)
    rates = [entropy_rate(m, 400, trials=2).bits_per_symbol for m in models]
    cases = 10_000
    failures = retries = total_bits = 0
    longest = 0
    start = time.perf_counter()
    for i in range(cases):
        idx = rng.randrange(len(models))
        model = models[idx]
        length = 32768 if i % 1250 == 0 else _message_length(rng)
        bits = int_to_bits(rng.getrandbits(length), length)
        mode = rng.choice((PAPER, PRG))
        if mode == PAPER:
            ys = embed_aad(bits, model)
        else:
            n_target = int(length / rates[idx] * 1.1) + 40
            while True:
                try:
                    ys = embed_aad(bits, model, mode=PRG, n_target=n_target, key=rng.randbytes(8))
                    break
                except EntropyExhaustedError:
                    n_target *= 2
                    retries += 1
        failures += extract_aae(ys, model, length, mode) != bits
        total_bits += length
        longest = max(longest, length)
    elapsed = time.perf_counter() - start
    _detail(
        record_property,
        f"{cases} cases, {failures} failures, {total_bits / cases:.0f} mean bits, "
        f"longest {longest // 8} bytes, {retries} prg retries, {elapsed:.1f} s",
    )
    assert failures == 0
    assert longest == 32768
    assert elapsed <= 60


@pytest.mark.criterion(3, "divergence bound, ternary model")
def test_criterion_3_kl_bound(record_property):
    model = StaticModel(FrequencyTable(TERNARY))
    start = time.perf_counter()
    reports = verify_kl_bound(model, [6, 8, 10, 12])
    elapsed = time.perf_counter() - start
    golden = reports_from_csv((GOLDENS / "kl_ternary_paper.csv").read_text())
    summary = ", ".join(f"L={r.L}: {r.kl_value:.4f} < {r.bound:.4f}" for r in reports)
    _detail(record_property, f"{summary}; {elapsed:.1f} s")
    assert all(r.satisfied for r in reports)
    assert non_increasing(reports)
    for g, r in zip(golden, reports):
        assert g.L == r.L and r.kl_value == pytest.approx(g.kl_value, rel=1e-12)
    assert elapsed <= 300


def _prg_models():
    out = []
    for alphabet in (2, 3, 4):
        out.append(StaticModel(quantize_counts(list(range(1, alphabet + 1)), 97)))
        corpus = [(i * i + i // 3) % alphabet for i in range(40)]
        out.append(train_markov(corpus, 1, alphabet))
        out.append(train_markov(corpus, 2, alphabet, width=100))
    return out


@pytest.mark.criterion(4, "prg padding reproduces the cover law")
def test_criterion_4_prg_exact(record_property):
    instances = 0
    for model in _prg_models():
        for n in range(1, 7):
            cover = cover_distribution(model, n)
            for L in (0, 1, 2, 3, 5):
                stego = induced_stego_distribution(model, L, PRG, n_target=n)
                assert stego == cover
                assert kl_divergence(cover, stego) == 0.0
                instances += 1
    _detail(record_property, f"{instances} instances, all rationally equal, KL = 0")


@pytest.mark.criterion(5, "embedding rate")
def test_criterion_5_rate(record_property):
    ternary = rate_report(StaticModel(FrequencyTable(TERNARY)), 10_000, trials=8, seed=1)
    binary = rate_report(StaticModel(FrequencyTable((1, 1))), 10_000, trials=4, seed=1)
    _detail(record_property, f"ternary {ternary.mean_rate:.4f} bits/symbol, uniform binary {binary.mean_rate!r}")
    assert abs(ternary.mean_rate - TERNARY_ENTROPY) <= 0.02
    assert all(abs(r - TERNARY_ENTROPY) <= 0.02 for r in ternary.rates)
    assert binary.mean_rate == 1.0 and set(binary.rates) == {1.0}


@pytest.mark.criterion(6, "modulated coordinates are standard normal")
def test_criterion_6_modulator(record_property):
    parts = []
    for p in (1, 2, 3, 4):
        rng = np.random.default_rng(100 + p)
        bits = rng.integers(0, 2, 100_000 * p)
        z = modulate(bits, p, rng)
        ks = ks_normal_test(z)
        recovered = np.array_equal(demodulate(z, p), bits)
        parts.append(f"p={p}: KS p-value {ks.pvalue:.3f}, recovery {'100%' if recovered else 'FAILED'}")
        assert z.size == 100_000
        assert ks.pvalue > 0.01
        assert recovered
    _detail(record_property, "; ".join(parts))


@pytest.mark.criterion(7, "toy flow pipeline")
def test_criterion_7_toy_flow(record_property):
    rng = np.random.default_rng(7)
    parts = []
    for p in (1, 4, 8):
        dim = 128 // p
        flow = ToyFlow(dim, depth=4, seed=p)
        messages = rng.integers(0, 2, (1000, 128))
        z = modulate(messages.reshape(-1), p, rng).reshape(1000, dim)
        z_back = flow.invert(flow.generate(z))
        err = float(np.max(np.abs(z_back - z)))
        exact = np.array_equal(demodulate(z_back.reshape(-1), p).reshape(1000, 128), messages)
        parts.append(f"p={p}: max error {err:.1e}, {'exact' if exact else 'MISMATCH'}")
        assert err <= 1e-9
        assert exact
    _detail(record_property, "; ".join(parts))


@pytest.mark.criterion(8, "rejection-sampling baseline capacity")
def test_criterion_8_baseline(record_property):
    rng = random.Random(8)
    key = b"baseline key"
    parts = []
    for e in (1, 2, 4):
        groups = 10_000
        bits = [rng.getrandbits(1) for _ in range(groups * e)]
        res = rejection_sample_baseline(key, bits, lambda: rng.randbytes(16), e, keyed_hash(key, e))
        assert rejection_sample_recover(key, res.objects, e, len(bits)) == bits
        assert len(res.draws) == groups
        parts.append(f"e={e}: {res.mean_draws:.2f} draws (expected {2**e})")
        assert abs(res.mean_draws - 2**e) <= 0.1 * 2**e
    _detail(record_property, "; ".join(parts))
