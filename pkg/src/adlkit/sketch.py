"""Randomized sketches of a vector with unbiased inner products.

A sketch of ``u`` (typically ``u = w - w0``) transmits a ceiling-quantized
scale ``sbar ~ ||u||`` once, then ``q_B`` independent draws.  Each draw picks
a coordinate ``i`` with probability ``u_i^2 / ||u||^2`` and transmits the
sign of ``u_i`` together with a randomized rounding of ``||u||^2 / |u_i|``
onto the grid ``{k * sbar}``; the decoded draw is the corresponding multiple
of ``sbar`` times ``sign(u_i) * e_i``.  The rounding rounds up with
probability equal to the fractional part, so each draw is exactly unbiased
for ``u``, and a short computation gives per-draw second moment at most
``2 B^2 ||u||^2`` for inputs with ``||x|| <= B``.  Averaging the
``q_B = 2 * ceil(B^2)`` draws therefore meets the contract

    E[<u_hat, x>] = <u, x>,     Var(<u_hat, x>) <= ||u||^2.

Averaging ``q`` independent sketches tightens the variance to
``||u||^2 / q`` at ``q`` times the bits.  The expected encoded length of one
sketch is ``O(B^2 log2 d)``: the grid index has expectation at most
``||u|| / |u_i|``, and the average of ``log2(||u|| / |u_i|)`` under the
sampling weights is half the entropy of those weights, hence at most
``(1/2) log2 d``.

The zero vector is transmitted as a one-symbol empty marker and decodes to
the exactly-zero estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .bitcodec import (
    BitString,
    BitWriter,
    FramedMessage,
    SymbolReader,
    encode_fixed,
    encode_gamma,
    encode_signed,
    frame,
    gamma_length,
    signed_length,
)
from .errors import DimensionMismatch
from .model import ceil_log2_int


@dataclass(frozen=True)
class SketchConfig:
    """Shared protocol parameters, known out-of-band to encoder and decoder."""

    d: int
    B: float
    q_B: int | None = None
    mantissa_bits: int = 8

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.B <= 0:
            raise ValueError("B must be positive")
        if self.mantissa_bits < 1:
            raise ValueError("mantissa_bits must be at least 1")
        if self.q_B is None:
            object.__setattr__(self, "q_B", 2 * math.ceil(self.B ** 2))
        if self.q_B < 1:
            raise ValueError("q_B must be positive")

    @property
    def index_width(self) -> int:
        return ceil_log2_int(self.d) if self.d > 1 else 0


@dataclass(frozen=True)
class ScaleCode:
    """Ceiling quantization of a positive scale to relative precision.

    ``value = mantissa * 2^(exponent - mantissa_bits)`` with
    ``mantissa in (2^(mantissa_bits-1), 2^mantissa_bits]``, which lands in
    ``[norm, 2 * norm]`` for every ``mantissa_bits >= 1``.
    """

    exponent: int
    mantissa: int
    mantissa_bits: int

    @property
    def value(self) -> float:
        return math.ldexp(float(self.mantissa), self.exponent - self.mantissa_bits)

    @property
    def symbols(self) -> int:
        return signed_length(self.exponent) + (self.mantissa_bits - 1)

    def encode(self) -> BitString:
        w = BitWriter()
        w.extend(encode_signed(self.exponent))
        w.extend(encode_fixed(self.mantissa - (1 << (self.mantissa_bits - 1)) - 1,
                              self.mantissa_bits - 1))
        return w.done()

    @staticmethod
    def read(r: SymbolReader, mantissa_bits: int) -> "ScaleCode":
        exponent = r.read_signed()
        offset = r.read_fixed(mantissa_bits - 1)
        mantissa = offset + (1 << (mantissa_bits - 1)) + 1
        return ScaleCode(exponent, mantissa, mantissa_bits)


def quantize_scale(norm: float, mantissa_bits: int) -> ScaleCode:
    if not (norm > 0 and math.isfinite(norm)):
        raise ValueError("scale must be positive and finite")
    frac, exp = math.frexp(norm)            # norm = frac * 2^exp, frac in [0.5, 1)
    ce = exp - 1 if frac == 0.5 else exp    # ceil(log2(norm))
    mantissa = math.ceil(math.ldexp(norm, mantissa_bits - ce))
    return ScaleCode(ce, mantissa, mantissa_bits)


def _weights(u: np.ndarray) -> tuple[np.ndarray, float]:
    norm_sq = float(np.dot(u, u))
    return u * u / norm_sq, norm_sq


def _sample_indices(u: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    probs, _ = _weights(u)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, len(u) - 1).astype(np.int64)


def _sample_grid(u: np.ndarray, idx: np.ndarray, sbar: float,
                 rng: np.random.Generator) -> np.ndarray:
    norm_sq = float(np.dot(u, u))
    target = norm_sq / np.abs(u[idx])
    ratio = target / sbar
    lo = np.floor(ratio)
    grid = lo + (rng.random(len(idx)) < (ratio - lo))
    return grid.astype(np.int64)


@dataclass(frozen=True)
class SketchSample:
    """One sketch: a quantized scale and ``q_B`` decoded draws.

    Stored exactly as decoded (integers plus the quantized scale), so
    encoding round-trips bit-for-bit and evaluation is reproducible.
    """

    cfg: SketchConfig
    is_zero: bool
    scale: ScaleCode | None
    idx: np.ndarray      # int64[q_B]
    grid: np.ndarray     # int64[q_B]
    sign: np.ndarray     # int8[q_B], values in {-1, +1}

    def __post_init__(self):
        for name in ("idx", "grid", "sign"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    def inner(self, x: np.ndarray) -> float:
        """<u_hat, x>: the average of the decoded draws' inner products."""
        if self.is_zero:
            return 0.0
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cfg.d,):
            raise DimensionMismatch(f"x has shape {x.shape}, expected ({self.cfg.d},)")
        sbar = self.scale.value
        vals = self.grid.astype(np.float64) * sbar * self.sign * x[self.idx]
        return float(vals.mean())

    @property
    def payload_symbols(self) -> int:
        if self.is_zero:
            return 1
        per_draw = self.cfg.index_width + 1
        total = 1 + self.scale.symbols + len(self.idx) * per_draw
        total += int(sum(gamma_length(int(k)) for k in self.grid))
        return total

    def payload(self) -> BitString:
        w = BitWriter()
        if self.is_zero:
            return w.bit(0).done()
        w.bit(1)
        w.extend(self.scale.encode())
        for i in range(len(self.idx)):
            w.extend(encode_fixed(int(self.idx[i]), self.cfg.index_width))
            w.bit(0 if self.sign[i] > 0 else 1)
            w.extend(encode_gamma(int(self.grid[i])))
        return w.done()

    @staticmethod
    def read(r: SymbolReader, cfg: SketchConfig) -> "SketchSample":
        if r.read_bit() == 0:
            return SketchSample(cfg, True, None,
                                np.empty(0, np.int64), np.empty(0, np.int64),
                                np.empty(0, np.int8))
        scale = ScaleCode.read(r, cfg.mantissa_bits)
        idx = np.empty(cfg.q_B, np.int64)
        grid = np.empty(cfg.q_B, np.int64)
        sign = np.empty(cfg.q_B, np.int8)
        for i in range(cfg.q_B):
            idx[i] = r.read_fixed(cfg.index_width)
            sign[i] = 1 if r.read_bit() == 0 else -1
            grid[i] = r.read_gamma()
        return SketchSample(cfg, False, scale, idx, grid, sign)


def sketch_once(u: np.ndarray, cfg: SketchConfig, rng: np.random.Generator) -> SketchSample:
    """Draw one sketch of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (cfg.d,):
        raise DimensionMismatch(f"u has shape {u.shape}, expected ({cfg.d},)")
    if not np.any(u):
        return SketchSample(cfg, True, None, np.empty(0, np.int64),
                            np.empty(0, np.int64), np.empty(0, np.int8))
    scale = quantize_scale(float(np.linalg.norm(u)), cfg.mantissa_bits)
    idx = _sample_indices(u, rng, cfg.q_B)
    grid = _sample_grid(u, idx, scale.value, rng)
    sign = np.where(u[idx] > 0, 1, -1).astype(np.int8)
    return SketchSample(cfg, False, scale, idx, grid, sign)


@dataclass(frozen=True)
class AveragedSketch:
    """Average of ``q`` independent sketches of ``w - w0`` plus the fixed offset.

    Evaluation is ``(1/q) * sum_s <u_hat_s, x> + <w0, x>``; the reference
    vector ``w0`` is class-level knowledge shared by both sides.
    """

    q: int
    samples: tuple[SketchSample, ...]
    base: np.ndarray

    def __post_init__(self):
        if self.q != len(self.samples):
            raise ValueError("q must equal the number of samples")
        base = np.array(self.base, dtype=np.float64, copy=True)
        base.setflags(write=False)
        object.__setattr__(self, "base", base)

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        total = 0.0
        for s in self.samples:
            total += s.inner(x)
        return total / self.q + float(np.dot(self.base, x))

    @property
    def payload_symbols(self) -> int:
        return sum(s.payload_symbols for s in self.samples)

    def payload(self) -> BitString:
        w = BitWriter()
        for s in self.samples:
            w.extend(s.payload())
        return w.done()

    @staticmethod
    def read(r: SymbolReader, cfg: SketchConfig, w0: np.ndarray, q: int) -> "AveragedSketch":
        samples = tuple(SketchSample.read(r, cfg) for _ in range(q))
        return AveragedSketch(q, samples, w0)


def sketch_avg(w: np.ndarray, w0: np.ndarray, q: int, cfg: SketchConfig,
               rng: np.random.Generator) -> AveragedSketch:
    """Average of ``q`` fresh sketches of ``w - w0``."""
    if q < 1:
        raise ValueError("q must be positive")
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    u = w - w0
    samples = tuple(sketch_once(u, cfg, rng) for _ in range(q))
    return AveragedSketch(q, samples, w0)


def sketch_encode(s: SketchSample | AveragedSketch) -> FramedMessage:
    """Frame a sketch for transmission.

    Averaged sketches carry a gamma-coded count header so they are
    self-describing; the config itself is never transmitted.
    """
    if isinstance(s, SketchSample):
        return frame([s.payload()])
    w = BitWriter()
    w.extend(encode_gamma(s.q))
    w.extend(s.payload())
    return frame([w.done()])


def sketch_decode(msg: FramedMessage, cfg: SketchConfig,
                  w0: np.ndarray | None = None) -> SketchSample | AveragedSketch:
    r = SymbolReader(msg)
    r.expect_open()
    if w0 is None:
        out: SketchSample | AveragedSketch = SketchSample.read(r, cfg)
    else:
        q = r.read_gamma()
        out = AveragedSketch.read(r, cfg, np.asarray(w0, dtype=np.float64), q)
    r.expect_close()
    r.expect_end()
    return out


# ---------------------------------------------------------------------------
# Exact outcome spaces (for the enumeration oracle) and batched sampling
# (for high-volume Monte Carlo), sharing the arithmetic above.
# ---------------------------------------------------------------------------

def draw_outcomes(u: np.ndarray, cfg: SketchConfig) -> list[tuple[float, int, float]]:
    """All outcomes of a single draw as ``(probability, index, coefficient)``.

    The decoded draw equals ``coefficient * e_index``.  At most ``2 d``
    outcomes: each coordinate contributes its low and high grid rounding.
    """
    u = np.asarray(u, dtype=np.float64)
    if not np.any(u):
        return [(1.0, 0, 0.0)]
    probs, norm_sq = _weights(u)
    sbar = quantize_scale(float(np.sqrt(norm_sq)), cfg.mantissa_bits).value
    out: list[tuple[float, int, float]] = []
    for i in range(len(u)):
        if probs[i] == 0.0:
            continue
        target = norm_sq / abs(float(u[i]))
        ratio = target / sbar
        lo = math.floor(ratio)
        frac = ratio - lo
        sign = 1.0 if u[i] > 0 else -1.0
        if frac > 0.0:
            out.append((float(probs[i]) * (1.0 - frac), i, lo * sbar * sign))
            out.append((float(probs[i]) * frac, i, (lo + 1) * sbar * sign))
        else:
            out.append((float(probs[i]), i, lo * sbar * sign))
    return out


def draw_inner_outcomes(u: np.ndarray, x: np.ndarray,
                        cfg: SketchConfig) -> list[tuple[float, float]]:
    """Distribution of a single draw's inner product with ``x``."""
    x = np.asarray(x, dtype=np.float64)
    return [(p, coeff * float(x[i])) for p, i, coeff in draw_outcomes(u, cfg)]


def batch_draw_inners(u: np.ndarray, x: np.ndarray, cfg: SketchConfig,
                      rng: np.random.Generator, n: int
                      ) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent draws: inner products with ``x`` and symbol costs."""
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not np.any(u):
        return np.zeros(n), np.zeros(n)
    scale = quantize_scale(float(np.linalg.norm(u)), cfg.mantissa_bits)
    idx = _sample_indices(u, rng, n)
    grid = _sample_grid(u, idx, scale.value, rng)
    sign = np.where(u[idx] > 0, 1.0, -1.0)
    vals = grid.astype(np.float64) * scale.value * sign * x[idx]
    glen = 2.0 * np.floor(np.log2(grid.astype(np.float64) + 1.0)) + 1.0
    syms = (cfg.index_width + 1.0) + glen
    return vals, syms


def batch_sketch_inners(u: np.ndarray, x: np.ndarray, cfg: SketchConfig,
                        rng: np.random.Generator, n: int
                        ) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent sketches: evaluated inner products and payload symbols."""
    u = np.asarray(u, dtype=np.float64)
    if not np.any(u):
        return np.zeros(n), np.ones(n)
    vals, syms = batch_draw_inners(u, x, cfg, rng, n * cfg.q_B)
    scale = quantize_scale(float(np.linalg.norm(u)), cfg.mantissa_bits)
    head = 1.0 + scale.symbols
    return (vals.reshape(n, cfg.q_B).mean(axis=1),
            head + syms.reshape(n, cfg.q_B).sum(axis=1))


def batch_avg_inners(w: np.ndarray, w0: np.ndarray, x: np.ndarray, q: int,
                     cfg: SketchConfig, rng: np.random.Generator, n: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent q-averaged sketches evaluated at ``x``."""
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    vals, syms = batch_sketch_inners(w - w0, x, cfg, rng, n * q)
    offset = float(np.dot(w0, x))
    return (vals.reshape(n, q).mean(axis=1) + offset,
            syms.reshape(n, q).sum(axis=1))


def measure_sketch_symbols(u: np.ndarray, cfg: SketchConfig,
                           rng: np.random.Generator, n: int) -> float:
    """Empirical mean payload symbols of a sketch of ``u`` over ``n`` draws."""
    u = np.asarray(u, dtype=np.float64)
    x = np.zeros(cfg.d)
    _, syms = batch_sketch_inners(u, x, cfg, rng, n)
    return float(syms.mean())


def sketch_contract(u: np.ndarray, x: np.ndarray, q: int = 1) -> tuple[float, float]:
    """(mean target, variance bound) of a q-averaged sketch at ``x``."""
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    norm_sq = float(np.dot(u, u))
    return float(np.dot(u, x)), norm_sq / q
