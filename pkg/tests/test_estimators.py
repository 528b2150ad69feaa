"""Grid memorizer, residual estimates, telescoping chain, and the combined
per-neuron estimator.  Exact enumeration oracles come first in each group;
Monte Carlo is only used where enumeration is genuinely infeasible."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adlkit.errors import EnumerationTooLarge, RestrictionError
from adlkit.estimators import (
    H1Data,
    ScalarEstimator,
    batch_neuron_evals,
    batch_squeezer_evals,
    compute_h1_values,
    estimator_sum,
    exact_level_size,
    h1_compress,
    h1_reference,
    level_mean_outcomes,
    neuron_decode,
    neuron_encode,
    neuron_sample,
    residual_bound,
    rmf_decode,
    rmf_encode,
    rmf_entry_outcomes,
    rmf_make,
    squeezer_decode,
    squeezer_encode,
    squeezer_sample,
)
from adlkit.exact import (
    count_mean_outcomes,
    exact_moments,
    iter_mean_outcomes,
    product_outcomes,
)
from adlkit.model import SampleSet, activation_by_name, ceil_log2_int, derive_rng
from adlkit.sketch import SketchConfig

RELU = activation_by_name("relu")
IDENT = activation_by_name("identity")

# shared small scenario: two points on the unit circle, k = ceil(log2(d*m)) = 2
CFG = SketchConfig(d=2, B=1.0)
A = SampleSet(np.array([[0.8, -0.6], [-0.28, 0.96]]))
W = np.array([0.9, 0.35])
W0 = np.array([0.5, 0.6])
K = ceil_log2_int(CFG.d * A.m)


# ---------------------------------------------------------------------------
# enumeration helpers
# ---------------------------------------------------------------------------

def test_mean_outcome_count_formula():
    # compositions of n_draws over a support of size s: C(n+s-1, s-1)
    assert count_mean_outcomes(3, 2) == math.comb(2 + 2, 2)
    single = [(0.25, -1.0), (0.5, 0.0), (0.25, 1.0)]
    assert len(list(iter_mean_outcomes(single, 2))) == count_mean_outcomes(3, 2)


def test_iter_mean_outcomes_matches_brute_force():
    single = [(0.3, -1.0), (0.7, 2.0)]
    got = sorted(iter_mean_outcomes(single, 3))
    brute = {}
    for a in single:
        for b in single:
            for c in single:
                mean = (a[1] + b[1] + c[1]) / 3.0
                brute[round(mean, 12)] = brute.get(round(mean, 12), 0.0) + a[0] * b[0] * c[0]
    assert len(got) == len(brute)
    for p, v in got:
        assert p == pytest.approx(brute[round(v, 12)], abs=1e-12)


def test_product_outcomes_independence():
    got = list(product_outcomes([[(0.5, 1.0), (0.5, 2.0)],
                                 [(0.25, 10.0), (0.75, 20.0)]]))
    assert len(got) == 4
    _, mean, _, _ = exact_moments((p, sum(vs)) for p, vs in got)
    assert mean == pytest.approx(1.5 + 17.5, abs=1e-12)


def test_enumeration_cap_enforced():
    with pytest.raises(EnumerationTooLarge):
        list(iter_mean_outcomes([(0.1, float(i)) for i in range(10)], 50, cap=1000))


# ---------------------------------------------------------------------------
# grid memorizer
# ---------------------------------------------------------------------------

def test_rmf_entry_exact_example():
    """f = 0.6 on the quarter grid: mean exactly 0.6, variance 0.6*0.4/16."""
    prob, mean, var, n = exact_moments(rmf_entry_outcomes(0.6, 1.0, 4.0))
    assert prob == pytest.approx(1.0, abs=1e-15)
    assert mean == pytest.approx(0.6, abs=1e-12)
    assert var == pytest.approx(0.09, abs=1e-12)
    assert n == 2


@given(
    st.floats(min_value=-1.0, max_value=1.0),
    st.sampled_from([0.25, 0.5, 1.0, 3.0, 4.0, 16.0, 37.5]),
)
@settings(max_examples=300)
def test_rmf_entry_unbiased_with_variance_cap(value, alpha):
    prob, mean, var, _ = exact_moments(rmf_entry_outcomes(value, 1.0, alpha))
    assert prob == pytest.approx(1.0, abs=1e-12)
    assert mean == pytest.approx(value, abs=1e-12)
    assert var <= 1.0 / alpha + 1e-12


def test_rmf_entry_boundary_clamp():
    # f = C lands on the clamped top cell and relies on the bump to reach C
    prob, mean, var, _ = exact_moments(rmf_entry_outcomes(1.0, 1.0, 4.0))
    assert prob == pytest.approx(1.0, abs=1e-15)
    assert mean == pytest.approx(1.0, abs=1e-12)
    assert var <= 0.25 + 1e-12
    prob, mean, _, _ = exact_moments(rmf_entry_outcomes(-1.0, 1.0, 4.0))
    assert mean == pytest.approx(-1.0, abs=1e-12)


def test_rmf_coarse_grid_multi_unit_bump():
    """alpha < 1 needs bumps larger than one cell to stay unbiased."""
    outs = rmf_entry_outcomes(3.7, 5.0, 0.25)
    prob, mean, var, _ = exact_moments(outs)
    assert prob == pytest.approx(1.0, abs=1e-12)
    assert mean == pytest.approx(3.7, abs=1e-12)
    assert var <= 4.0 + 1e-12


def test_rmf_realization_roundtrip_and_symbol_budget():
    rng = derive_rng(31, "rmf")
    vals = np.array([0.6, -0.4, 1.0, 0.0])
    r = rmf_make(vals, 1.0, 4.0, rng)
    # each entry is within one whole-unit bump of its grid cell
    assert np.all(np.abs(r.values() - vals) <= 1.0 + 1e-12)
    assert r.entry_symbols <= r.nominal_symbols()
    back = rmf_decode(rmf_encode(r), len(vals))
    assert np.array_equal(back.values(), r.values())
    assert rmf_encode(back) == rmf_encode(r)


def test_rmf_zero_realization_single_symbol():
    rng = derive_rng(31, "rmfzero")
    r = rmf_make(np.zeros(3), 0.0, math.inf, rng)
    assert r.is_zero and r.total_symbols == 1
    back = rmf_decode(rmf_encode(r), 3)
    assert back.values().tolist() == [0.0, 0.0, 0.0]


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=50)
def test_rmf_grid_draw_is_two_point(seed_offset):
    rng = derive_rng(31, "rmfdraw", seed_offset)
    r = rmf_make(np.array([0.37]), 1.0, 8.0, rng)
    # realized entry = grid cell plus a whole-unit bump: 2/8 or 2/8 + 1
    val = float(r.values()[0])
    assert val in (pytest.approx(0.25), pytest.approx(1.25))


# ---------------------------------------------------------------------------
# residual reference values
# ---------------------------------------------------------------------------

def test_h1_exact_matches_mc():
    exact = h1_reference(W, W0, A[1], K, CFG, RELU, mode="exact")
    mc = h1_reference(W, W0, A[1], K, CFG, RELU, mode="mc", n_mc=300_000,
                      rng=derive_rng(31, "h1mc"))
    assert exact.mode == "exact" and mc.mode == "mc"
    assert abs(exact.value - mc.value) <= 4 * mc.se + 1e-9


def test_h1_within_residual_cap():
    cap = residual_bound(RELU.lipschitz, float(np.linalg.norm(W - W0)), CFG.d, A.m)
    data = compute_h1_values(W, W0, A, RELU, K, CFG)
    assert np.all(np.abs(data.values) <= cap + 1e-12)
    assert data.clamped == 0


def test_h1_identity_activation_vanishes():
    """A linear activation makes the chain exactly unbiased, so the residual
    reference must be exactly zero (the snap guard keeps float dust out)."""
    data = compute_h1_values(W, W0, A, IDENT, K, CFG)
    assert data.values.tolist() == [0.0, 0.0]


def test_h1_compress_grid_spacing():
    data = compute_h1_values(W, W0, A, RELU, K, CFG)
    r = h1_compress(W, W0, A, RELU, K, CFG, derive_rng(31, "h1c"), h1_data=data)
    dist = float(np.linalg.norm(W - W0))
    alpha = CFG.d * A.m / (RELU.lipschitz * dist) ** 2
    assert r.alpha == pytest.approx(alpha)
    assert np.all(np.abs(r.values() - data.values) <= 1.0 / alpha + 1e-12)


def test_exact_level_size_counts_compositions():
    size = exact_level_size(W - W0, K, CFG)
    n_draws = (2**K) * CFG.q_B
    n_support = len({v for _, v in
                     __import__("adlkit.sketch", fromlist=["draw_inner_outcomes"])
                     .draw_inner_outcomes(W - W0, A[0], CFG)})
    # the implementation counts compositions over the draw support
    assert size >= count_mean_outcomes(2, n_draws)
    assert size <= count_mean_outcomes(2 * CFG.d, n_draws)


# ---------------------------------------------------------------------------
# telescoping chain
# ---------------------------------------------------------------------------

def test_squeezer_mean_matches_level_enumeration():
    outs = [(p, RELU.fn(v)) for p, v in level_mean_outcomes(W, W0, A[1], K, CFG)]
    _, truth, _, _ = exact_moments(outs)
    n = 200_000
    vals, syms = batch_squeezer_evals(W, W0, A[1], K, CFG, RELU,
                                      derive_rng(31, "sq"), n)
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - truth) <= 4 * se + 1e-12
    dist = float(np.linalg.norm(W - W0))
    assert vals.var(ddof=1) <= 3 * (RELU.lipschitz * dist) ** 2 * K * 1.05
    assert np.all(syms >= K)  # gate flags always present


def test_squeezer_gate_rates():
    """Level i retransmits with probability 2^-i."""
    rng = derive_rng(31, "gates")
    fired = np.zeros(K)
    n = 20_000
    for _ in range(n):
        s = squeezer_sample(W, W0, K, CFG, rng)
        for i in range(1, K + 1):
            fired[i - 1] += bool(s.gates[i - 1])
    for i in range(1, K + 1):
        rate = fired[i - 1] / n
        expected = 2.0**-i
        assert abs(rate - expected) <= 4 * math.sqrt(expected / n) + 1e-3


def test_squeezer_needed_levels_cover_fired_gates():
    rng = derive_rng(31, "lvl")
    for _ in range(40):
        s = squeezer_sample(W, W0, K, CFG, rng)
        needed = s.needed_levels()
        assert 0 in needed
        for i in range(1, K + 1):
            if s.gates[i - 1]:
                assert i in needed and i - 1 in needed


def test_squeezer_roundtrip_bit_identical():
    rng = derive_rng(31, "sqrt")
    for _ in range(30):
        s = squeezer_sample(W, W0, K, CFG, rng)
        msg = squeezer_encode(s)
        back = squeezer_decode(msg, CFG, W0, K)
        for i in range(A.m):
            assert back.eval(A[i], RELU) == s.eval(A[i], RELU)
        assert squeezer_encode(back) == msg
        assert len(msg) == s.payload_symbols + 2


def test_squeezer_rejects_zero_levels():
    with pytest.raises(ValueError):
        squeezer_sample(W, W0, 0, CFG, derive_rng(31, "bad"))


# ---------------------------------------------------------------------------
# combined neuron estimator
# ---------------------------------------------------------------------------

def test_neuron_unbiased_with_variance_cap():
    h1 = compute_h1_values(W, W0, A, RELU, K, CFG)
    n = 150_000
    dist = float(np.linalg.norm(W - W0))
    cap = 5 * (RELU.lipschitz * dist) ** 2 * K
    for i in range(A.m):
        truth = RELU.fn(float(W @ A[i]))
        vals, _ = batch_neuron_evals(W, W0, A, RELU, CFG, i,
                                     derive_rng(31, "nmc", i), n, h1_data=h1)
        se = vals.std(ddof=1) / math.sqrt(n)
        assert abs(vals.mean() - truth) <= 4 * se + 1e-12
        assert vals.var(ddof=1) <= cap * 1.05


def test_neuron_gate_restricts_to_sample():
    rng = derive_rng(31, "gate")
    for _ in range(300):
        nr = neuron_sample(W, W0, A, RELU, CFG, rng)
        if nr.gate:
            with pytest.raises(RestrictionError):
                nr.eval(x=np.array([0.1, 0.2]))
            nr.eval(0)  # on-sample stays fine
            break
    else:
        pytest.fail("gate never fired in 300 samples (p ~ 1/4 each)")


def test_neuron_roundtrip_bit_identical():
    rng = derive_rng(31, "nrt")
    for _ in range(30):
        nr = neuron_sample(W, W0, A, RELU, CFG, rng)
        msg = neuron_encode(nr)
        back = neuron_decode(msg, CFG, W0, A, RELU)
        for i in range(A.m):
            assert back.eval(i) == nr.eval(i)
        assert neuron_encode(back) == msg
        assert len(msg) == nr.payload_symbols + 2


def test_neuron_degenerate_at_base_point():
    vals, _ = batch_neuron_evals(W0, W0, A, RELU, CFG, 0,
                                 derive_rng(31, "deg"), 2000)
    assert np.all(vals == RELU.fn(float(W0 @ A[0])))


def test_neuron_requires_two_cells():
    tiny = SampleSet(np.array([[1.0]]))
    with pytest.raises(ValueError):
        neuron_sample(np.array([0.5]), np.array([0.0]), tiny, RELU,
                      SketchConfig(d=1, B=1.0), derive_rng(31, "tiny"))


# ---------------------------------------------------------------------------
# scalar estimator algebra
# ---------------------------------------------------------------------------

def test_estimator_sum_combines_contracts():
    a = ScalarEstimator(mean=1.0, var_bound=0.5, bits_bound=10.0,
                        draw=lambda rng: (1.0, 10.0), constant=False)
    b = ScalarEstimator.constant_of(2.5)
    s = estimator_sum(a, b)
    assert s.mean == 3.5
    assert s.var_bound == 0.5  # constants carry no variance
    assert s.bits_bound == 10.0  # ...and cost no symbols
    value, symbols = s.draw(derive_rng(31, "sum"))
    assert value == 3.5 and symbols == 10.0
