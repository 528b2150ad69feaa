"""Random sketch layer: scale quantization, draw enumeration, contracts."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adlkit.exact import exact_moments, iter_mean_outcomes
from adlkit.model import derive_rng
from adlkit.sketch import (
    AveragedSketch,
    SketchConfig,
    batch_avg_inners,
    batch_draw_inners,
    draw_inner_outcomes,
    draw_outcomes,
    measure_sketch_symbols,
    quantize_scale,
    sketch_avg,
    sketch_contract,
    sketch_decode,
    sketch_encode,
    sketch_once,
)

U = np.array([0.6, 0.8])
X = np.array([0.8, -0.6])
CFG2 = SketchConfig(d=2, B=1.0)


def test_config_defaults():
    assert CFG2.q_B == 2
    assert CFG2.index_width == 1
    assert SketchConfig(d=5, B=1.5).q_B == 2 * math.ceil(1.5**2)
    assert SketchConfig(d=1024, B=1.0).index_width == 10
    assert SketchConfig(d=1, B=1.0).index_width == 0


@given(st.floats(min_value=1e-8, max_value=1e8))
@settings(max_examples=300)
def test_scale_quantization_window(norm):
    """The coded scale lands in [norm, 2*norm] at 8 mantissa symbols."""
    s = quantize_scale(norm, 8)
    assert norm <= s.value <= 2.0 * norm


def test_scale_code_roundtrip():
    from adlkit.bitcodec import SymbolReader

    for norm in (1e-3, 0.37, 1.0, 5.25, 9e7):
        code = quantize_scale(norm, 8)
        r = SymbolReader(code.encode())
        back = type(code).read(r, 8)
        assert back.value == code.value


def test_single_draw_enumeration_is_unbiased():
    outcomes = draw_inner_outcomes(U, X, CFG2)
    prob, mean, var, _ = exact_moments([(p, v) for p, v in outcomes])
    truth, _ = sketch_contract(U, X, q=1)
    assert prob == pytest.approx(1.0, abs=1e-12)
    assert mean == pytest.approx(truth, abs=1e-12)
    # one draw of a unit vector against a unit-norm point: variance <= 2 B^2
    assert var <= 2.0 + 1e-12


def test_draw_outcomes_probabilities_sum_to_one():
    rng = derive_rng(5, "draws")
    for _ in range(25):
        u = rng.standard_normal(4) * rng.uniform(0.1, 3.0)
        outs = draw_outcomes(u, SketchConfig(d=4, B=1.0))
        assert math.fsum(p for p, _, _ in outs) == pytest.approx(1.0, abs=1e-12)
        # randomized rounding keeps each coefficient within one grid step
        sbar = quantize_scale(float(np.linalg.norm(u)), 8).value
        nsq = float(u @ u)
        for p, i, coeff in outs:
            assert abs(abs(coeff) - nsq / abs(u[i])) <= sbar + 1e-9


def test_full_sketch_enumeration_matches_contract():
    """Exact moments over all q_B draws of one sketch: Var <= ||u||^2."""
    single = draw_inner_outcomes(U, X, CFG2)
    avg = list(iter_mean_outcomes(single, CFG2.q_B))
    prob, mean, var, _ = exact_moments(avg)
    truth, var_bound = sketch_contract(U, X, q=1)  # one full sketch
    assert prob == pytest.approx(1.0, abs=1e-12)
    assert mean == pytest.approx(truth, abs=1e-12)
    assert var <= var_bound + 1e-12


def test_zero_vector_single_symbol():
    rng = derive_rng(5, "zero")
    s = sketch_once(np.zeros(2), CFG2, rng)
    assert s.payload_symbols == 1
    assert s.inner(X) == 0.0
    msg = sketch_encode(s)
    assert len(msg) == 3  # empty marker plus brackets
    back = sketch_decode(msg, CFG2)
    assert back.inner(X) == 0.0


def test_encode_decode_bit_identical():
    rng = derive_rng(5, "roundtrip")
    for _ in range(50):
        s = sketch_once(rng.standard_normal(2), CFG2, rng)
        msg = sketch_encode(s)
        back = sketch_decode(msg, CFG2)
        assert back.inner(X) == s.inner(X)
        assert sketch_encode(back) == msg
        assert len(msg) == s.payload_symbols + 2


def test_averaged_sketch_decodes_with_base_point():
    rng = derive_rng(5, "avg")
    w = np.array([0.9, 0.35])
    w0 = np.array([0.5, 0.6])
    s = sketch_avg(w, w0, 4, CFG2, rng)
    msg = sketch_encode(s)
    back = sketch_decode(msg, CFG2, w0=w0)
    assert back.value(X) == s.value(X)


def test_batch_matches_streaming_distribution():
    """Batched draws and the enumerated distribution agree in moments."""
    rng = derive_rng(5, "batch")
    n = 200_000
    vals, syms = batch_draw_inners(U, X, CFG2, rng, n)
    prob, mean, var, _ = exact_moments(draw_inner_outcomes(U, X, CFG2))
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - mean) <= 4 * se + 1e-12
    assert vals.var(ddof=1) <= var * 1.05
    assert np.all(syms >= 3)  # index + sign + at least one gamma symbol


def test_avg_batch_unbiased_with_offset():
    rng = derive_rng(5, "avgbatch")
    w = np.array([0.9, 0.35])
    w0 = np.array([0.5, 0.6])
    n = 100_000
    vals, _ = batch_avg_inners(w, w0, X, 4, CFG2, rng, n)
    truth = float(w @ X)
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - truth) <= 4 * se + 1e-12
    _, bound = sketch_contract(w - w0, X, q=4)
    assert vals.var(ddof=1) <= bound * 1.05


def test_symbol_budget_scales_with_log_dimension():
    """Mean payload length stays within the analytic per-draw budget."""
    rng = derive_rng(5, "budget")
    for d in (4, 64, 1024):
        cfg = SketchConfig(d=d, B=1.0)
        u = rng.standard_normal(d)
        measured = measure_sketch_symbols(u, cfg, rng, 3000)
        scale_syms = quantize_scale(float(np.linalg.norm(u)), 8).symbols
        per_draw = cfg.index_width + 1 + (math.log2(d) + 3)
        assert measured <= 1 + scale_syms + cfg.q_B * per_draw + 1e-9
