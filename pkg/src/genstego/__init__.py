"""Provably secure steganography by arithmetic decoding of model output.

Modules
-------
coder
    Fixed-precision adaptive arithmetic decoder (embed) and encoder (extract).
exact
    Exact-rational reference coder used for differential testing.
models
    Integer frequency-table models: static schedules and adaptive Markov.
latent
    Message bits to standard-normal latent coordinates and a toy flow.
harness
    Exhaustive divergence checks, rate reports, KS tests and a baseline.
formats
    Byte-exact model, stego and latent file formats.
"""

from .coder import PAPER, PRG, FrequencyTable, embed_aad, extract_aae
from .errors import (
    AmbiguousStegoError,
    EntropyExhaustedError,
    ExtractionError,
    FormatError,
    InvalidTableError,
    ModelFormatError,
    StateSpaceError,
    StegoError,
)
from .latent import ToyFlow, build_partition, demodulate, modulate
from .models import AdaptiveMarkovModel, StaticModel, quantize, train_markov

__all__ = [
    "PAPER",
    "PRG",
    "FrequencyTable",
    "embed_aad",
    "extract_aae",
    "StaticModel",
    "AdaptiveMarkovModel",
    "quantize",
    "train_markov",
    "build_partition",
    "modulate",
    "demodulate",
    "ToyFlow",
    "StegoError",
    "InvalidTableError",
    "EntropyExhaustedError",
    "ExtractionError",
    "AmbiguousStegoError",
    "FormatError",
    "ModelFormatError",
    "StateSpaceError",
]
