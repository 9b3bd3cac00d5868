"""Message bits to standard-normal latent coordinates and back.

Each group of ``p`` message bits selects one of ``2**p`` equal-probability
cells of the real line; the coordinate is then drawn from the standard normal
restricted to that cell. Uniform message bits therefore yield exactly
standard-normal coordinates, which is what an innocent user would feed a
generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INVERSE_CDF = "inverse-cdf"
REJECTION = "rejection"
METHODS = (INVERSE_CDF, REJECTION)
MAX_PAYLOAD = 16

# Acklam's rational approximation, relative error below 1.15e-9
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

_erfc = np.frompyfunc(math.erfc, 1, 1)


def normal_cdf(x):
    """Standard normal CDF; accurate in the lower tail."""
    x = np.asarray(x, dtype=np.float64)
    return (0.5 * _erfc(-x / _SQRT2)).astype(np.float64)


def _lower_ppf(u: np.ndarray) -> np.ndarray:
    # u in (0, 0.5]; result <= 0
    x = np.empty_like(u)
    tail = u < _P_LOW
    q = np.sqrt(-2.0 * np.log(u[tail]))
    c, d = _C, _D
    x[tail] = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
        (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
    )
    mid = ~tail
    q = u[mid] - 0.5
    r = q * q
    a, b = _A, _B
    x[mid] = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )
    # one Newton step against the erfc-based CDF
    err = normal_cdf(x) - u
    x = x - err * _SQRT2PI * np.exp(0.5 * x * x)
    return np.where(u == 0.5, 0.0, x)


def normal_ppf(u):
    """Inverse of the standard normal CDF for ``0 < u < 1``.

    Scalars give a float, arrays an array. The upper half is computed by
    symmetry, so ``normal_ppf(1 - u) == -normal_ppf(u)`` whenever ``1 - u``
    is exact.
    """
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("normal_ppf is defined on the open interval (0, 1)")
    flat = arr.reshape(-1)
    upper = flat > 0.5
    out = _lower_ppf(np.where(upper, 1.0 - flat, flat))
    out = np.where(upper, -out, out).reshape(arr.shape)
    return float(out) if np.ndim(u) == 0 else out


@dataclass(frozen=True)
class IntervalPartition:
    """The ``2**p + 1`` cut points splitting the line into equal-mass cells."""

    p: int
    boundaries: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.float64)
        if not 1 <= self.p <= MAX_PAYLOAD:
            raise ValueError(f"payload must be in 1..{MAX_PAYLOAD}, got {self.p}")
        if b.shape != (2**self.p + 1,):
            raise ValueError(f"expected {2**self.p + 1} boundaries, got {b.shape}")
        if b[0] != -np.inf or b[-1] != np.inf or not np.all(np.diff(b) > 0):
            raise ValueError("boundaries must increase strictly from -inf to +inf")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @property
    def cells(self) -> int:
        return 2**self.p

    @property
    def interior(self) -> np.ndarray:
        return self.boundaries[1:-1]

    @classmethod
    def from_interior(cls, p: int, interior) -> "IntervalPartition":
        return cls(p, np.concatenate(([-np.inf], np.asarray(interior, dtype=np.float64), [np.inf])))

    def cell_of(self, z) -> np.ndarray:
        return np.searchsorted(self.interior, np.asarray(z, dtype=np.float64), side="right")


def build_partition(p: int) -> IntervalPartition:
    """Cut points ``ppf(i / 2**p)``, mirrored so the table is exactly antisymmetric."""
    if not 1 <= p <= MAX_PAYLOAD:
        raise ValueError(f"payload must be in 1..{MAX_PAYLOAD}, got {p}")
    half = 2 ** (p - 1)
    lower = normal_ppf(np.arange(1, half, dtype=np.float64) / 2**p) if half > 1 else np.empty(0)
    interior = np.concatenate((lower, [0.0], -lower[::-1]))
    return IntervalPartition.from_interior(p, interior)


def bits_to_groups(bits, p: int) -> np.ndarray:
    """Pack MSB-first ``p``-bit groups; the tail is zero-padded."""
    arr = np.asarray(bits, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("bits must be 0 or 1")
    pad = (-arr.size) % p
    if pad:
        arr = np.concatenate((arr, np.zeros(pad, dtype=np.int64)))
    weights = 1 << np.arange(p - 1, -1, -1, dtype=np.int64)
    return arr.reshape(-1, p) @ weights


def groups_to_bits(groups, p: int) -> np.ndarray:
    groups = np.asarray(groups, dtype=np.int64).reshape(-1, 1)
    return ((groups >> np.arange(p - 1, -1, -1, dtype=np.int64)) & 1).reshape(-1)


def _open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    # strictly inside (0, 1)
    return (rng.integers(0, 1 << 53, size=n).astype(np.float64) + 0.5) / 2.0**53


def _truncated_inverse_cdf(idx: np.ndarray, partition: IntervalPartition, rng) -> np.ndarray:
    scale = float(partition.cells)
    z = normal_ppf((idx + _open_uniform(rng, idx.size)) / scale) if idx.size else np.empty(0)
    lo = partition.boundaries[idx]
    hi = np.nextafter(partition.boundaries[idx + 1], -np.inf)
    # rounding at the cell edges must never move a coordinate to a neighbour
    return np.clip(z, lo, hi)


def modulate(
    bits,
    p: int,
    rng: np.random.Generator | int | None = None,
    method: str = INVERSE_CDF,
    partition: IntervalPartition | None = None,
) -> np.ndarray:
    """Map message bits to latent coordinates, one coordinate per ``p`` bits.

    ``method="inverse-cdf"`` evaluates the quantile function at a uniform
    point of the cell's probability range; ``method="rejection"`` redraws
    standard normals until one lands in the cell (falling back to the inverse
    CDF after ``2**(p + 12)`` rounds). Both follow the same truncated-normal
    law.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    partition = partition or build_partition(p)
    if partition.p != p:
        raise ValueError("partition payload does not match p")
    rng = np.random.default_rng(rng)
    idx = bits_to_groups(bits, p)
    if method == INVERSE_CDF:
        return _truncated_inverse_cdf(idx, partition, rng)
    z = np.empty(idx.size)
    lo = partition.boundaries[idx]
    hi = partition.boundaries[idx + 1]
    todo = np.arange(idx.size)
    for _ in range(2 ** (p + 12)):
        if not todo.size:
            break
        draw = rng.standard_normal(todo.size)
        hit = (draw >= lo[todo]) & (draw < hi[todo])
        z[todo[hit]] = draw[hit]
        todo = todo[~hit]
    if todo.size:
        z[todo] = _truncated_inverse_cdf(idx[todo], partition, rng)
    return z


def demodulate(z, p: int, partition: IntervalPartition | None = None) -> np.ndarray:
    """Cell index of every coordinate, expanded to ``p`` bits each."""
    partition = partition or build_partition(p)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise ValueError("latent coordinates must be finite")
    return groups_to_bits(partition.cell_of(z), p)


class ToyFlow:
    """Small invertible generator standing in for a trained flow.

    Each layer applies an orthogonal mixing matrix with per-coordinate
    scales and a bias, then the monotone squashing ``s * asinh(x / s)``.
    Both directions are closed form.
    """

    def __init__(self, dim: int, depth: int = 3, seed: int = 0, softness: float = 2.0):
        if dim < 1 or depth < 1:
            raise ValueError("dim and depth must be positive")
        self.dim = dim
        self.softness = softness
        rng = np.random.default_rng(seed)
        self.layers = []
        for _ in range(depth):
            q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
            q = q * np.sign(np.diag(r))
            scales = rng.uniform(0.7, 1.4, size=dim)
            weight = q * scales
            inverse = q.T / scales[:, None]
            bias = rng.normal(0.0, 0.1, size=dim)
            self.layers.append((weight, inverse, bias))

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {v.shape[-1]}")
        return v

    def generate(self, z) -> np.ndarray:
        x = self._check(z)
        s = self.softness
        for weight, _, bias in self.layers:
            x = s * np.arcsinh((x @ weight.T + bias) / s)
        return x

    def invert(self, x) -> np.ndarray:
        z = self._check(x)
        s = self.softness
        for _, inverse, bias in reversed(self.layers):
            z = (s * np.sinh(z / s) - bias) @ inverse.T
        return z


def toy_flow_generate(flow: ToyFlow, z) -> np.ndarray:
    return flow.generate(z)


def toy_flow_invert(flow: ToyFlow, x) -> np.ndarray:
    return flow.invert(x)
