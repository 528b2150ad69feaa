"""Randomized estimators for a single hidden neuron.

Three constructions combine into an unbiased, variance-bounded, cheaply
encodable estimate of ``sigma(<w, x_i>)`` on a fixed set of ``m`` sample
points:

* **Grid memorizer** (``rmf_make``): stores a function ``f: [m] -> R`` with
  ``|f| <= C`` on the grid ``{n / alpha}`` plus a random unit bump, exactly
  unbiased with per-point variance at most ``1 / alpha``, in
  ``m * (ceil_log2_plus(alpha * C) + 2)`` payload symbols.  For
  ``alpha < 1`` the bump generalizes to a randomized rounding onto the
  integers (the single-bit bump cannot bridge a grid step wider than 1).

* **Telescoping sketch chain** (``squeezer_sample``): ``k + 1`` mutually
  independent averaged sketches of ``w`` with ``2^i`` sketches at level
  ``i``, combined through random level gates ``z_i in {0, 2^i}`` with
  ``P(z_i = 2^i) = 2^-i``.  The telescoping sum has the same mean as the
  most accurate level but costs only ``O(k)`` expected sketches; its
  variance is at most ``3 L^2 ||w - w0||^2 k``.

* **Residual memorizer** (``h1_compress``): the gap between the true neuron
  output and the chain's expectation is at most ``L ||w - w0|| / sqrt(dm)``
  per point, so it fits a grid memorizer of order ``dm / (L^2 ||w-w0||^2)``.

``neuron_sample`` glues them: a gate ``z in {0, 2^k}`` with
``P(2^k) = 2^-k`` multiplies the residual memorizer, and the chain is added
unconditionally, giving mean exactly ``sigma(<w, x_i>)`` and variance at
most ``5 L^2 ||w - w0||^2 k`` for ``k = ceil(log2(d m))``.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bitcodec import (
    BitString,
    BitWriter,
    FramedMessage,
    SymbolReader,
    encode_fixed,
    encode_gamma,
    frame,
    gamma_length,
)
from .errors import DimensionMismatch, EnumerationTooLarge, RestrictionError
from .exact import (
    check_enumeration_size,
    count_mean_outcomes,
    exact_moments,
    iter_mean_outcomes,
)
from .model import Activation, EstimatorContract, SampleSet, ceil_log2_int, ceil_log2_plus
from .sketch import (
    AveragedSketch,
    SketchConfig,
    batch_avg_inners,
    draw_inner_outcomes,
    sketch_avg,
)

logger = logging.getLogger(__name__)

MC_TRIALS_CAP = 10_000_000


# ---------------------------------------------------------------------------
# Grid memorizer
# ---------------------------------------------------------------------------

def _grid_widths(alpha: float, bound: float) -> tuple[int, int, int, int]:
    """(quantized-value width, bump width, max |quantized|, max bump)."""
    c_int = max(1, math.ceil(alpha * bound))
    width_n = 1 + ceil_log2_int(c_int)
    max_bump = 1 if alpha >= 1.0 else math.ceil(1.0 / alpha)
    width_b = max(1, max_bump.bit_length())
    return width_n, width_b, c_int, max_bump


def _quantize_entry(value: float, alpha: float, c_int: int) -> tuple[int, int, float]:
    """Quantized integer, bump floor, and bump-up probability for one entry."""
    n = math.floor(alpha * value)
    if n >= c_int:          # value == C with alpha*C integral; shift one step down
        n = c_int - 1
    gap = max(value - n / alpha, 0.0)
    lo = math.floor(gap)
    return n, lo, gap - lo


@dataclass(frozen=True)
class RMFRealization:
    """A realized grid memorizer: per-point grid cell plus realized bump.

    ``value(i) = qints[i] / alpha + bumps[i]``.  A zero realization (bound
    ``C = 0``) is the deterministic zero function, transmitted as a single
    marker symbol.  ``bound`` is kept for bookkeeping and is ``nan`` on
    decoded realizations (it is not transmitted; evaluation never needs it).
    """

    alpha: float
    bound: float
    qints: np.ndarray
    bumps: np.ndarray
    is_zero: bool
    se_budget: float = 0.0
    clamped: int = 0
    # Field widths as transmitted; populated on decode (where the bound is
    # unknown) so that re-encoding reproduces the exact same symbols.
    coded_widths: tuple[int, int] | None = None

    def __post_init__(self):
        self.qints.setflags(write=False)
        self.bumps.setflags(write=False)

    def _widths(self) -> tuple[int, int]:
        if self.coded_widths is not None:
            return self.coded_widths
        wn, wb, _, _ = _grid_widths(self.alpha, self._width_bound())
        return wn, wb

    @property
    def m(self) -> int:
        return len(self.qints)

    def value(self, i: int) -> float:
        if self.is_zero:
            return 0.0
        return float(self.qints[i]) / self.alpha + float(self.bumps[i])

    def values(self) -> np.ndarray:
        if self.is_zero:
            return np.zeros(self.m)
        return self.qints / self.alpha + self.bumps

    @property
    def entry_symbols(self) -> int:
        """Payload symbols of the entries, the contract-accounted quantity."""
        if self.is_zero:
            return 0
        wn, wb = self._widths()
        return self.m * (wn + wb)

    @property
    def header_symbols(self) -> int:
        if self.is_zero:
            return 1
        wn, wb = self._widths()
        return 1 + gamma_length(wn) + gamma_length(wb) + 64

    @property
    def total_symbols(self) -> int:
        return self.header_symbols + self.entry_symbols

    def _width_bound(self) -> float:
        # Reconstruct a bound compatible with the stored integers when the
        # realization was decoded (bound not transmitted): widths are what
        # matter, and they are recoverable from the data.
        if not math.isnan(self.bound):
            return self.bound
        biggest = max(1, int(np.max(np.abs(self.qints))) if self.m else 1)
        return biggest / self.alpha

    def nominal_symbols(self) -> int:
        """The declared entry budget ``m * (ceil_log2_plus(alpha*C) + 2)``."""
        if self.is_zero:
            return 0
        return self.m * (ceil_log2_plus(self.alpha * self._width_bound()) + 2)

    def contract(self) -> EstimatorContract:
        return EstimatorContract(
            mean_target=math.nan,
            variance_bound=0.0 if self.is_zero else 1.0 / self.alpha,
            expected_bits_bound=float(self.nominal_symbols()),
        )

    def payload(self) -> BitString:
        w = BitWriter()
        if self.is_zero:
            return w.bit(0).done()
        w.bit(1)
        wn, wb = self._widths()
        w.extend(encode_gamma(wn))
        w.extend(encode_gamma(wb))
        for byte in struct.pack(">d", self.alpha):
            for shift in range(7, -1, -1):
                w.bit((byte >> shift) & 1)
        half = 1 << (wn - 1)
        for i in range(self.m):
            w.extend(encode_fixed(int(self.qints[i]) + half, wn))
            w.extend(encode_fixed(int(self.bumps[i]), wb))
        return w.done()

    @staticmethod
    def read(r: SymbolReader, m: int) -> "RMFRealization":
        if r.read_bit() == 0:
            return RMFRealization(math.inf, 0.0, np.zeros(m, np.int64),
                                  np.zeros(m, np.int64), True)
        wn = r.read_gamma()
        wb = r.read_gamma()
        raw = bytearray()
        for _ in range(8):
            byte = 0
            for _ in range(8):
                byte = (byte << 1) | r.read_bit()
            raw.append(byte)
        alpha = struct.unpack(">d", bytes(raw))[0]
        half = 1 << (wn - 1)
        qints = np.empty(m, np.int64)
        bumps = np.empty(m, np.int64)
        for i in range(m):
            qints[i] = r.read_fixed(wn) - half
            bumps[i] = r.read_fixed(wb)
        return RMFRealization(alpha, math.nan, qints, bumps, False,
                              coded_widths=(wn, wb))


def rmf_make(values: np.ndarray, bound: float, alpha: float,
             rng: np.random.Generator, se_budget: float = 0.0,
             clamped: int = 0) -> RMFRealization:
    """Randomized grid memorization of ``values`` with ``|values| <= bound``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or len(values) < 1:
        raise DimensionMismatch("values must be a non-empty vector")
    if bound < 0:
        raise ValueError("bound must be non-negative")
    if bound == 0.0:
        for i, v in enumerate(values):
            if v != 0.0:
                raise ValueError(f"values[{i}] = {v} exceeds bound 0")
        return RMFRealization(math.inf, 0.0, np.zeros(len(values), np.int64),
                              np.zeros(len(values), np.int64), True,
                              se_budget, clamped)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("alpha must be positive and finite")
    for i, v in enumerate(values):
        if abs(v) > bound:
            raise ValueError(f"values[{i}] = {v} exceeds bound {bound}")
    _, _, c_int, max_bump = _grid_widths(alpha, bound)
    m = len(values)
    qints = np.empty(m, np.int64)
    bumps = np.empty(m, np.int64)
    u = rng.random(m)
    for i in range(m):
        n, lo, frac = _quantize_entry(float(values[i]), alpha, c_int)
        qints[i] = n
        bumps[i] = lo + (1 if u[i] < frac else 0)
        if bumps[i] > max_bump:       # cannot happen; guard the invariant
            raise AssertionError("bump exceeded its width budget")
    return RMFRealization(alpha, bound, qints, bumps, False, se_budget, clamped)


def rmf_entry_outcomes(value: float, bound: float, alpha: float
                       ) -> list[tuple[float, float]]:
    """Exact two-point distribution of one memorizer entry (oracle helper)."""
    if bound == 0.0:
        return [(1.0, 0.0)]
    _, _, c_int, _ = _grid_widths(alpha, bound)
    n, lo, frac = _quantize_entry(value, alpha, c_int)
    base = n / alpha + lo
    if frac <= 0.0:
        return [(1.0, base)]
    return [(1.0 - frac, base), (frac, base + 1.0)]


def rmf_encode(r: RMFRealization) -> FramedMessage:
    return frame([r.payload()])


def rmf_decode(msg: FramedMessage, m: int) -> RMFRealization:
    r = SymbolReader(msg)
    r.expect_open()
    out = RMFRealization.read(r, m)
    r.expect_close()
    r.expect_end()
    return out


# ---------------------------------------------------------------------------
# Reference expectation of the most accurate sketch level, and the residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class H1Estimate:
    """Residual ``sigma(<w, x>) - E[sigma(<w_tilde_k, x>)]`` at one point."""

    value: float
    se: float
    mode: str
    size: int            # outcomes enumerated, or MC trials


def level_mean_outcomes(w: np.ndarray, w0: np.ndarray, x: np.ndarray, k: int,
                        cfg: SketchConfig):
    """Exact distribution of ``<w_tilde_k, x>`` by multiset enumeration."""
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    u = w - w0
    offset = float(np.dot(w0, x))
    if not np.any(u):
        yield 1.0, offset
        return
    single = draw_inner_outcomes(u, x, cfg)
    n_draws = (1 << k) * cfg.q_B
    for p, mean in iter_mean_outcomes(single, n_draws):
        yield p, offset + mean


def exact_level_size(u: np.ndarray, k: int, cfg: SketchConfig) -> int:
    u = np.asarray(u, dtype=np.float64)
    if not np.any(u):
        return 1
    from .sketch import draw_outcomes
    support = len(draw_outcomes(u, cfg))
    return count_mean_outcomes(support, (1 << k) * cfg.q_B)


def h1_reference(w: np.ndarray, w0: np.ndarray, x: np.ndarray, k: int,
                 cfg: SketchConfig, act: Activation, mode: str = "exact",
                 n_mc: int | None = None,
                 rng: np.random.Generator | None = None) -> H1Estimate:
    """The residual at one point, via exact enumeration or Monte Carlo.

    Exact mode enumerates the full outcome space of the level-``k`` averaged
    sketch and is refused above the enumeration cap.  Monte Carlo mode
    reports the standard error of the estimated expectation.  Residuals
    within double-precision noise of zero are snapped to exact zero so that
    degenerate classes (identity activation, ``w = w0``) stay exactly
    degenerate.
    """
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    fwx = float(act(np.dot(w, x)))
    if mode == "exact":
        total, mean, _, size = exact_moments(
            (p, float(act(v))) for p, v in level_mean_outcomes(w, w0, x, k, cfg))
        if abs(total - 1.0) > 1e-9:
            raise AssertionError(f"enumerated probabilities sum to {total}")
        h1, se = fwx - mean, 0.0
    elif mode == "mc":
        if rng is None or n_mc is None:
            raise ValueError("mc mode needs rng and n_mc")
        if n_mc > MC_TRIALS_CAP:
            raise ValueError(f"n_mc exceeds cap {MC_TRIALS_CAP}")
        vals, _ = batch_avg_inners(w, w0, x, 1 << k, cfg, rng, n_mc)
        sig = act(vals)
        mean = float(sig.mean())
        se = float(sig.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else math.inf
        h1, size = fwx - mean, n_mc
    else:
        raise ValueError(f"unknown mode '{mode}'")
    if abs(h1) <= 1e-12 * max(1.0, abs(fwx)):
        h1 = 0.0
    return H1Estimate(h1, se, mode, size)


@dataclass(frozen=True)
class H1Data:
    """Residuals at every sample point plus their worst standard error."""

    values: np.ndarray
    se_budget: float
    clamped: int

    def __post_init__(self):
        self.values.setflags(write=False)


def residual_bound(L: float, dist: float, d: int, m: int) -> float:
    """Per-point residual bound ``L ||w - w0|| / sqrt(dm)``."""
    return L * dist / math.sqrt(d * m)


def compute_h1_values(w: np.ndarray, w0: np.ndarray, A: SampleSet,
                      act: Activation, k: int, cfg: SketchConfig,
                      rng: np.random.Generator | None = None,
                      mode: str = "auto") -> H1Data:
    """Residuals on the whole sample set; exact when feasible else MC.

    Monte Carlo size targets a standard error of one tenth of the memorizer
    grid step.  Residuals outside the certified bound (possible only through
    MC error) are clamped to it and counted.
    """
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    u = w - w0
    dist = float(np.linalg.norm(u))
    L = act.lipschitz
    bound = residual_bound(L, dist, cfg.d, A.m)
    if dist == 0.0:
        return H1Data(np.zeros(A.m), 0.0, 0)
    if mode == "auto":
        try:
            check_enumeration_size(exact_level_size(u, k, cfg) * A.m)
            mode = "exact"
        except EnumerationTooLarge:
            mode = "mc"
    values = np.empty(A.m)
    worst_se = 0.0
    clamped = 0
    if mode == "exact":
        for i in range(A.m):
            est = h1_reference(w, w0, A[i], k, cfg, act, mode="exact")
            values[i] = est.value
    else:
        if rng is None:
            raise ValueError("mc mode needs an rng")
        alpha = cfg.d * A.m / (L * dist) ** 2 if L * dist > 0 else math.inf
        target = 1.0 / (10.0 * alpha)
        pilot = 2048
        for i in range(A.m):
            est = h1_reference(w, w0, A[i], k, cfg, act, mode="mc",
                               n_mc=pilot, rng=rng)
            sd = est.se * math.sqrt(pilot)
            n_need = min(MC_TRIALS_CAP,
                         max(pilot, math.ceil((sd / target) ** 2))) if target > 0 else MC_TRIALS_CAP
            if n_need > pilot:
                est = h1_reference(w, w0, A[i], k, cfg, act, mode="mc",
                                   n_mc=n_need, rng=rng)
            if est.se > target:
                logger.warning(
                    "residual MC at point %d: se %.3g above target %.3g (trial cap)",
                    i, est.se, target)
            values[i] = est.value
            worst_se = max(worst_se, est.se)
    for i in range(A.m):
        if abs(values[i]) > bound:
            logger.warning("residual at point %d clamped: %.6g -> %.6g",
                           i, values[i], math.copysign(bound, values[i]))
            values[i] = math.copysign(bound, values[i])
            clamped += 1
    return H1Data(values, worst_se, clamped)


def h1_compress(w: np.ndarray, w0: np.ndarray, A: SampleSet, act: Activation,
                k: int, cfg: SketchConfig, rng: np.random.Generator,
                mode: str = "auto", h1_data: H1Data | None = None
                ) -> RMFRealization:
    """Memorize the residuals: order ``dm / (L ||w-w0||)^2``, bound
    ``L ||w-w0|| / sqrt(dm)``.  The memorizer is an ``epsilon``-estimator of
    the residual with ``epsilon = L ||w-w0|| / sqrt(dm)``."""
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    dist = float(np.linalg.norm(w - w0))
    L = act.lipschitz
    if h1_data is None:
        h1_data = compute_h1_values(w, w0, A, act, k, cfg, rng, mode)
    bound = residual_bound(L, dist, cfg.d, A.m)
    if bound == 0.0:
        return rmf_make(np.zeros(A.m), 0.0, math.inf, rng,
                        h1_data.se_budget, h1_data.clamped)
    alpha = cfg.d * A.m / (L * dist) ** 2
    return rmf_make(h1_data.values, bound, alpha, rng,
                    h1_data.se_budget, h1_data.clamped)


# ---------------------------------------------------------------------------
# Telescoping sketch chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SqueezerRealization:
    """Realized telescoping chain.

    ``gates[i-1]`` is the realized ``z_i`` for term ``i`` (``2^i`` or 0);
    ``levels`` holds the averaged sketches actually needed: level 0 always
    (the base term), level ``j >= 1`` exactly when term ``j`` or term
    ``j + 1`` fired.  Adjacent fired terms share one encoding of their
    common level.
    """

    k: int
    gates: tuple[int, ...]
    levels: tuple[tuple[int, AveragedSketch], ...]
    dist: float

    def level(self, j: int) -> AveragedSketch:
        for jj, s in self.levels:
            if jj == j:
                return s
        raise KeyError(j)

    def needed_levels(self) -> list[int]:
        need = {0}
        for i in range(1, self.k + 1):
            if self.gates[i - 1]:
                need.add(i - 1)
                need.add(i)
        return sorted(need)

    def eval(self, x: np.ndarray, act: Activation) -> float:
        inner = {j: s.value(x) for j, s in self.levels}
        total = float(act(inner[0]))
        for i in range(1, self.k + 1):
            z = self.gates[i - 1]
            if z:
                total += z * (float(act(inner[i])) - float(act(inner[i - 1])))
        return total

    @property
    def payload_symbols(self) -> int:
        return self.k + sum(s.payload_symbols for _, s in self.levels)

    def variance_bound(self, L: float) -> float:
        return 3.0 * (L * self.dist) ** 2 * self.k

    def expected_symbol_bound(self, n_b: float) -> float:
        """(5/2) k n_B, the declared expected-length budget per chain."""
        return 2.5 * self.k * n_b

    def payload(self) -> BitString:
        w = BitWriter()
        for i in range(1, self.k + 1):
            w.bit(1 if self.gates[i - 1] else 0)
        for _, s in self.levels:
            w.extend(s.payload())
        return w.done()

    @staticmethod
    def read(r: SymbolReader, cfg: SketchConfig, w0: np.ndarray, k: int,
             dist: float = math.nan) -> "SqueezerRealization":
        gates = []
        for i in range(1, k + 1):
            gates.append((1 << i) if r.read_bit() else 0)
        need = {0}
        for i in range(1, k + 1):
            if gates[i - 1]:
                need.add(i - 1)
                need.add(i)
        levels = tuple((j, AveragedSketch.read(r, cfg, w0, 1 << j))
                       for j in sorted(need))
        return SqueezerRealization(k, tuple(gates), levels, dist)


def squeezer_sample(w: np.ndarray, w0: np.ndarray, k: int, cfg: SketchConfig,
                    rng: np.random.Generator) -> SqueezerRealization:
    """Sample gates, then the needed levels in ascending order."""
    if k < 1:
        raise ValueError("k must be at least 1")
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    gates = tuple((1 << i) if rng.random() < 2.0 ** -i else 0
                  for i in range(1, k + 1))
    need = {0}
    for i in range(1, k + 1):
        if gates[i - 1]:
            need.add(i - 1)
            need.add(i)
    levels = tuple((j, sketch_avg(w, w0, 1 << j, cfg, rng)) for j in sorted(need))
    return SqueezerRealization(k, gates, levels, float(np.linalg.norm(w - w0)))


def squeezer_eval(s: SqueezerRealization, x: np.ndarray, act: Activation) -> float:
    return s.eval(np.asarray(x, dtype=np.float64), act)


def squeezer_encode(s: SqueezerRealization) -> FramedMessage:
    return frame([s.payload()])


def squeezer_decode(msg: FramedMessage, cfg: SketchConfig, w0: np.ndarray,
                    k: int) -> SqueezerRealization:
    r = SymbolReader(msg)
    r.expect_open()
    out = SqueezerRealization.read(r, cfg, np.asarray(w0, dtype=np.float64), k)
    r.expect_close()
    r.expect_end()
    return out


def batch_squeezer_evals(w: np.ndarray, w0: np.ndarray, x: np.ndarray, k: int,
                         cfg: SketchConfig, act: Activation,
                         rng: np.random.Generator, n: int
                         ) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent chain evaluations at ``x`` plus payload symbols.

    Samples every level for every trial (unused levels are discarded, which
    leaves the distribution unchanged) so the whole batch is array work.
    """
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    fired = np.empty((k, n), dtype=bool)
    for i in range(1, k + 1):
        fired[i - 1] = rng.random(n) < 2.0 ** -i
    level_vals = []
    level_syms = []
    for j in range(k + 1):
        vals, syms = batch_avg_inners(w, w0, x, 1 << j, cfg, rng, n)
        level_vals.append(act(vals))
        level_syms.append(syms)
    out = level_vals[0].copy()
    for i in range(1, k + 1):
        out += fired[i - 1] * float(1 << i) * (level_vals[i] - level_vals[i - 1])
    syms = np.full(n, float(k)) + level_syms[0]
    for j in range(1, k + 1):
        needed = fired[j - 1] if j == k else (fired[j - 1] | fired[j])
        syms += needed * level_syms[j]
    return out, syms


# ---------------------------------------------------------------------------
# Combined single-neuron estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeuronRealization:
    """Gate times residual memorizer, plus the telescoping chain.

    The memorizer is sampled (and encoded) only when the gate fires; the
    realized estimate at sample index ``i`` is
    ``gate * memorizer(i) + chain(x_i)``.  When the gate fired the estimate
    exists only on the stored sample set.
    """

    gate: int
    rmf: RMFRealization | None
    squeezer: SqueezerRealization
    sample_set: SampleSet
    act: Activation
    k: int
    cfg: SketchConfig

    @property
    def dist(self) -> float:
        return self.squeezer.dist

    def eval(self, x_index: int | None = None, x: np.ndarray | None = None) -> float:
        if x_index is None:
            if self.gate:
                raise RestrictionError(
                    "gate fired: estimate exists only on the stored sample points")
            if x is None:
                raise ValueError("need x_index or x")
            return self.squeezer.eval(np.asarray(x, dtype=np.float64), self.act)
        xi = self.sample_set[x_index]
        total = self.squeezer.eval(xi, self.act)
        if self.gate:
            total += self.gate * self.rmf.value(x_index)
        return total

    @property
    def payload_symbols(self) -> int:
        total = 1 + self.squeezer.payload_symbols
        if self.gate:
            total += self.rmf.total_symbols
        return total

    def variance_bound(self) -> float:
        L = self.act.lipschitz
        return 5.0 * (L * self.dist) ** 2 * self.k

    def payload(self) -> BitString:
        w = BitWriter()
        w.bit(1 if self.gate else 0)
        if self.gate:
            w.extend(self.rmf.payload())
        w.extend(self.squeezer.payload())
        return w.done()

    @staticmethod
    def read(r: SymbolReader, cfg: SketchConfig, w0: np.ndarray, A: SampleSet,
             act: Activation) -> "NeuronRealization":
        k = ceil_log2_int(cfg.d * A.m)
        fired = r.read_bit()
        rmf = RMFRealization.read(r, A.m) if fired else None
        sq = SqueezerRealization.read(r, cfg, w0, k)
        return NeuronRealization((1 << k) if fired else 0, rmf, sq, A, act, k, cfg)


def neuron_sample(w: np.ndarray, w0: np.ndarray, A: SampleSet, act: Activation,
                  cfg: SketchConfig, rng: np.random.Generator,
                  h1_data: H1Data | None = None) -> NeuronRealization:
    """One realized neuron estimator on the sample set ``A``."""
    if A.d != cfg.d:
        raise DimensionMismatch(f"sample set dimension {A.d} != config d {cfg.d}")
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    k = ceil_log2_int(cfg.d * A.m)
    if k < 1:
        raise ValueError("d * m must be at least 2")
    fired = rng.random() < 2.0 ** -k
    rmf = None
    if fired:
        rmf = h1_compress(w, w0, A, act, k, cfg, rng, h1_data=h1_data)
    sq = squeezer_sample(w, w0, k, cfg, rng)
    return NeuronRealization((1 << k) if fired else 0, rmf, sq, A, act, k, cfg)


def neuron_eval(nr: NeuronRealization, x_index: int | None = None,
                x: np.ndarray | None = None) -> float:
    return nr.eval(x_index=x_index, x=x)


def neuron_encode(nr: NeuronRealization) -> FramedMessage:
    return frame([nr.payload()])


def neuron_decode(msg: FramedMessage, cfg: SketchConfig, w0: np.ndarray,
                  A: SampleSet, act: Activation) -> NeuronRealization:
    r = SymbolReader(msg)
    r.expect_open()
    out = NeuronRealization.read(r, cfg, np.asarray(w0, dtype=np.float64), A, act)
    r.expect_close()
    r.expect_end()
    return out


def batch_neuron_evals(w: np.ndarray, w0: np.ndarray, A: SampleSet,
                       act: Activation, cfg: SketchConfig, x_index: int,
                       rng: np.random.Generator, n: int,
                       h1_data: H1Data | None = None
                       ) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent neuron estimates at sample index ``x_index``."""
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    k = ceil_log2_int(cfg.d * A.m)
    dist = float(np.linalg.norm(w - w0))
    L = act.lipschitz
    gates = rng.random(n) < 2.0 ** -k
    if dist > 0.0 and L > 0.0:
        if h1_data is None:
            h1_data = compute_h1_values(w, w0, A, act, k, cfg, rng)
        bound = residual_bound(L, dist, cfg.d, A.m)
        alpha = cfg.d * A.m / (L * dist) ** 2
        wn, wb, c_int, _ = _grid_widths(alpha, bound)
        nq, lo, frac = _quantize_entry(float(h1_data.values[x_index]), alpha, c_int)
        bump = lo + (rng.random(n) < frac)
        rmf_vals = nq / alpha + bump
        rmf_syms = (1 + gamma_length(wn) + gamma_length(wb) + 64) + A.m * (wn + wb)
    else:
        rmf_vals = np.zeros(n)
        rmf_syms = 1
    sq_vals, sq_syms = batch_squeezer_evals(w, w0, A[x_index], k, cfg, act, rng, n)
    vals = gates * float(1 << k) * rmf_vals + sq_vals
    syms = 1.0 + gates * float(rmf_syms) + sq_syms
    return vals, syms


# ---------------------------------------------------------------------------
# Generic estimator algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarEstimator:
    """A sampleable unbiased scalar estimator with declared guarantees.

    ``draw(rng)`` returns ``(value, symbols)``.  ``constant`` marks
    deterministic zero-cost estimators, which add to the mean for free.
    """

    mean: float
    var_bound: float
    bits_bound: float
    draw: Callable[[np.random.Generator], tuple[float, float]] = field(repr=False)
    constant: bool = False

    @staticmethod
    def constant_of(value: float) -> "ScalarEstimator":
        return ScalarEstimator(value, 0.0, 0.0, lambda rng: (value, 0.0), True)

    def contract(self) -> EstimatorContract:
        return EstimatorContract(self.mean, self.var_bound, self.bits_bound)


def estimator_sum(e1: ScalarEstimator, e2: ScalarEstimator) -> ScalarEstimator:
    """Sum of independent estimators: means add, variance bounds add,
    expected bits add; a constant summand costs nothing."""
    var2 = 0.0 if e2.constant else e2.var_bound
    bits2 = 0.0 if e2.constant else e2.bits_bound
    var1 = 0.0 if e1.constant else e1.var_bound
    bits1 = 0.0 if e1.constant else e1.bits_bound

    def draw(rng: np.random.Generator) -> tuple[float, float]:
        v1, b1 = e1.draw(rng)
        v2, b2 = e2.draw(rng)
        return v1 + v2, (0.0 if e1.constant else b1) + (0.0 if e2.constant else b2)

    return ScalarEstimator(e1.mean + e2.mean, var1 + var2, bits1 + bits2,
                           draw, e1.constant and e2.constant)
