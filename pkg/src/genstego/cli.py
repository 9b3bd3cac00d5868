"""Command-line interface: ``genstego <command> ...``.

Exit codes
----------
0 success, 1 a verification check failed, 2 bad flags, 3 file or model I/O, 4 entropy exhausted,
5 malformed stego or latent file, 6 model digest mismatch,
7 ambiguous or undecodable stego, 8 enumeration guard tripped.
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from .bits import bits_to_bytes, bytes_to_bits, keystream_bits, parse_bit_string, seed_key
from .coder import MODES, PAPER, PRG, FrequencyTable, embed_aad, extract_aae
from .errors import (
    EntropyExhaustedError,
    ExtractionError,
    FormatError,
    ModelFormatError,
    StateSpaceError,
)
from .formats import (
    FLAG_BIT_TEXT,
    FLAG_LENGTH_PREFIX,
    LatentFile,
    StegoFile,
    deserialize_model,
    model_digest,
    serialize_model,
)
from .harness import format_reports, rate_report, reports_to_csv, verify_kl_bound
from .latent import METHODS, build_partition, demodulate, modulate
from .models import StaticModel, train_markov_bytes

log = logging.getLogger("genstego")

EXIT_FLAGS = 2
EXIT_IO = 3
EXIT_ENTROPY = 4
EXIT_FORMAT = 5
EXIT_DIGEST = 6
EXIT_AMBIGUOUS = 7
EXIT_GUARD = 8

SEED_ENV = "STEGO_SEED"
_HEADER_BITS = 32


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str) -> bytes:
    try:
        return sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror}") from exc


def _write(path: str | None, data: bytes) -> None:
    try:
        if path is None or path == "-":
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror}") from exc


def _load_model(path: str):
    raw = _read(path)
    try:
        return deserialize_model(raw), model_digest(raw)
    except ModelFormatError as exc:
        raise CliError(EXIT_IO, f"bad model file {path}: {exc}") from exc


def resolve_seed(seed: int | None) -> int:
    """Flag, then environment, then fresh entropy (logged so the run can be replayed)."""
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env, 0)
        except ValueError as exc:
            raise CliError(EXIT_FLAGS, f"{SEED_ENV}={env!r} is not an integer") from exc
    seed = secrets.randbits(63)
    log.warning("no seed given; using %s=%d", SEED_ENV, seed)
    return seed


def _mask(bits: list[int], key_hex: str | None) -> list[int]:
    # optional keyed whitening of the payload; plumbing, not encryption
    if not key_hex:
        return bits
    try:
        key = bytes.fromhex(key_hex)
    except ValueError as exc:
        raise CliError(EXIT_FLAGS, "--key must be hex") from exc
    pad = keystream_bits(b"payload:" + key)
    return [b ^ next(pad) for b in bits]


def _message_bits(path: str, as_text: bool) -> list[int]:
    raw = _read(path)
    if as_text:
        try:
            return parse_bit_string(raw.decode("ascii"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise CliError(EXIT_FORMAT, f"bad bit string in {path}: {exc}") from exc
    return bytes_to_bits(raw)


def _bits_output(bits: list[int], as_text: bool) -> bytes:
    return ("".join(map(str, bits)) + "\n").encode() if as_text else bits_to_bytes(bits)


def cmd_embed(args) -> int:
    model, digest = _load_model(args.model)
    bits = _message_bits(args.message, args.bits)
    if not args.bits:
        if len(bits) // 8 >= 1 << _HEADER_BITS:
            raise CliError(EXIT_FLAGS, "message too long for the length header")
        bits = bytes_to_bits((len(bits) // 8).to_bytes(4, "big")) + bits
    if args.length is not None:
        if not args.bits:
            raise CliError(EXIT_FLAGS, "--length needs --bits (byte messages carry their own length)")
        if not 0 <= args.length <= len(bits):
            raise CliError(EXIT_FLAGS, f"--length {args.length} outside 0..{len(bits)}")
        bits = bits[: args.length]
    bits = _mask(bits, args.key)
    if len(bits) >= 1 << 32:
        raise CliError(EXIT_FLAGS, "message longer than 2**32 - 1 bits")
    key = None
    if args.mode == PRG:
        if args.n_target is None:
            raise CliError(EXIT_FLAGS, "--mode prg requires --n-target")
        key = seed_key(resolve_seed(args.seed))
    elif args.n_target is not None:
        raise CliError(EXIT_FLAGS, "--n-target only applies to --mode prg")
    context = args.context.encode()
    symbols = embed_aad(bits, model, mode=args.mode, n_target=args.n_target, key=key, context=context)
    flags = 0 if args.bits else FLAG_LENGTH_PREFIX
    _write(args.out, StegoFile(args.mode, len(bits), digest, tuple(symbols), flags).to_bytes())
    log.info("embedded %d bits in %d symbols", len(bits), len(symbols))
    return 0


def cmd_extract(args) -> int:
    model, digest = _load_model(args.model)
    stego = StegoFile.from_bytes(_read(args.stego))
    if stego.model_digest != digest:
        raise CliError(EXIT_DIGEST, "stego file was made with a different model")
    bits = extract_aae(stego.symbols, model, stego.length, stego.mode, args.context.encode())
    bits = _mask(bits, args.key)
    if stego.flags & FLAG_LENGTH_PREFIX:
        if len(bits) < _HEADER_BITS:
            raise CliError(EXIT_FORMAT, "message shorter than its length header")
        size = int.from_bytes(bits_to_bytes(bits[:_HEADER_BITS]), "big")
        body = bits[_HEADER_BITS:]
        if 8 * size != len(body):
            raise CliError(EXIT_AMBIGUOUS, f"length header says {size} bytes, stego carries {len(body) // 8}")
        _write(args.out, bits_to_bytes(body))
    else:
        _write(args.out, _bits_output(bits, True))
    return 0


def cmd_modulate(args) -> int:
    bits = _message_bits(args.message, args.bits)
    seed = resolve_seed(args.seed)
    partition = build_partition(args.payload)
    z = modulate(bits, args.payload, np.random.default_rng(seed), args.method, partition)
    flags = FLAG_BIT_TEXT if args.bits else 0
    _write(args.out, LatentFile(args.payload, len(bits), partition.interior, z, flags).to_bytes())
    return 0


def cmd_demodulate(args) -> int:
    latent = LatentFile.from_bytes(_read(args.latent))
    bits = [int(b) for b in demodulate(latent.coordinates, latent.p, latent.partition)][: latent.message_bits]
    as_text = bool(latent.flags & FLAG_BIT_TEXT)
    if not as_text and len(bits) % 8:
        raise CliError(EXIT_FORMAT, "byte message with a bit count not divisible by 8")
    _write(args.out, _bits_output(bits, as_text))
    return 0


def _parse_tables(specs: list[str]) -> list:
    tables = []
    for spec in specs:
        try:
            counts = [int(c) for c in spec.split(",")]
            tables.append(FrequencyTable(tuple(counts)))
        except ValueError as exc:
            raise CliError(EXIT_FLAGS, f"bad table {spec!r}: {exc}") from exc
    return tables


def cmd_train(args) -> int:
    if args.table:
        if args.corpus is not None:
            raise CliError(EXIT_FLAGS, "give a corpus or --table, not both")
        model = StaticModel(_parse_tables(args.table), bounded=args.bounded)
    else:
        if args.corpus is None:
            raise CliError(EXIT_FLAGS, "train needs a corpus file or --table")
        try:
            model = train_markov_bytes(_read(args.corpus), args.order, args.width)
        except ValueError as exc:
            raise CliError(EXIT_FLAGS, str(exc)) from exc
    _write(args.out, serialize_model(model))
    return 0


def cmd_verify(args) -> int:
    model, _ = _load_model(args.model)
    lengths = [int(x) for x in args.lengths.split(",") if x]
    reports = verify_kl_bound(model, lengths, args.mode, args.n_target, args.context.encode(), args.workers)
    text = format_reports(reports)
    ok = all(r.satisfied for r in reports)
    if args.rate:
        rr = rate_report(model, args.rate, trials=args.trials, seed=resolve_seed(args.seed))
        text += (
            f"\nrate over n={rr.n}: {rr.mean_rate:.4f} bits/symbol "
            f"(entropy {rr.entropy:.4f}, accepted range {rr.lower:.4f}..{rr.upper:.4f}) "
            f"{'yes' if rr.within else 'NO'}"
        )
        ok = ok and rr.within
    print(text)
    if args.csv:
        _write(args.csv, reports_to_csv(reports).encode())
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genstego", description="Steganography by arithmetic decoding of model output.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def seed_flag(p):
        p.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV} or fresh, logged)")

    p = sub.add_parser("embed", help="hide a message in a symbol sequence")
    p.add_argument("message")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=MODES, default=PAPER)
    p.add_argument("--length", type=int, help="embed only the first LENGTH bits (with --bits)")
    p.add_argument("--n-target", type=int, help="stego length in prg mode")
    p.add_argument("--bits", action="store_true", help="message file is a 0/1 text string; no length header")
    p.add_argument("--context", default="", help="conditioning tag shared with the receiver")
    p.add_argument("--key", help="hex key for optional payload whitening")
    p.add_argument("--out")
    seed_flag(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover a message from a stego file")
    p.add_argument("stego")
    p.add_argument("--model", required=True)
    p.add_argument("--context", default="")
    p.add_argument("--key")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("modulate", help="map a message to normal latent coordinates")
    p.add_argument("message")
    p.add_argument("--payload", type=int, required=True, help="bits per coordinate")
    p.add_argument("--method", choices=METHODS, default=METHODS[0])
    p.add_argument("--bits", action="store_true")
    p.add_argument("--out")
    seed_flag(p)
    p.set_defaults(func=cmd_modulate)

    p = sub.add_parser("demodulate", help="recover a message from a latent file")
    p.add_argument("latent")
    p.add_argument("--out")
    p.set_defaults(func=cmd_demodulate)

    p = sub.add_parser("train", help="write a model file")
    p.add_argument("corpus", nargs="?")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--width", type=int, default=1 << 14, help="quantization total per table")
    p.add_argument("--table", action="append", help="static table as comma-separated counts; repeat for a schedule")
    p.add_argument("--bounded", action="store_true", default=None, help="the schedule ends after its last table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="exhaustive divergence and rate checks for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=MODES, default=PAPER)
    p.add_argument("--lengths", default="6,8,10,12")
    p.add_argument("--n-target", type=int)
    p.add_argument("--context", default="")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--rate", type=int, metavar="N", help="also measure the rate over N-symbol runs")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--csv", help="write one row per report")
    seed_flag(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="genstego: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except EntropyExhaustedError as exc:
        log.error("entropy exhausted: %s", exc)
        return EXIT_ENTROPY
    except ExtractionError as exc:
        log.error("cannot extract: %s", exc)
        return EXIT_AMBIGUOUS
    except StateSpaceError as exc:
        log.error("%s", exc)
        return EXIT_GUARD
    except FormatError as exc:
        log.error("malformed file: %s", exc)
        return EXIT_FORMAT
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_FLAGS


if __name__ == "__main__":
    sys.exit(main())
