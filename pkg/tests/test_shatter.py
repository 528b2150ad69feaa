"""Shattering construction: separated candidates, the max-formula Lipschitz
interpolant, and the end-to-end sign-pattern verification."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adlkit.errors import DimensionMismatch, InfeasibleInstance
from adlkit.model import derive_rng
from adlkit.shatter import (
    FEASIBLE_M,
    SEPARATION_SQ,
    ShatterCandidate,
    build_extension,
    build_instance,
    check_separation,
    class_membership,
    estimate_candidate_bytes,
    instance_from_jsonable,
    sample_candidate,
    sample_count,
    subset_table,
    verify_lipschitz,
    verify_shatter,
)


def test_sample_count():
    assert [sample_count(h) for h in (1, 9, 10, 19, 20, 30, 100)] == \
        [1, 1, 1, 1, 2, 3, 10]


def test_subset_table_m2():
    t = subset_table(2)
    assert t.tolist() == [[False, False], [True, False],
                          [False, True], [True, True]]


# ---------------------------------------------------------------------------
# one-dimensional extension, checked by hand
# ---------------------------------------------------------------------------

def test_extension_two_nodes_on_a_line():
    e = build_extension(np.array([[0.0], [1.0]]), np.array([1.0, -1.0]))
    assert e.center == 0.0
    assert e.alpha == 1.0
    assert e.lipschitz == 2.0
    assert e.eval(np.array([0.0])) == 1.0
    assert e.eval(np.array([1.0])) == -1.0
    assert e.eval(np.array([0.5])) == 0.0
    assert e.eval(np.array([10.0])) == -19.0  # rides the -1 cone downhill


def test_extension_interpolates_and_respects_slope():
    rng = derive_rng(11, "ext")
    nodes = rng.standard_normal((6, 3))
    labels = rng.standard_normal(6)
    e = build_extension(nodes, labels)
    vals = e.eval_many(nodes)
    assert np.allclose(vals, labels, atol=1e-12)
    rep = verify_lipschitz(e, 2000, derive_rng(11, "pairs"))
    assert rep.passed
    assert rep.max_ratio <= e.lipschitz + 1e-9
    assert rep.n_pairs == 15 + 2000


def test_extension_single_node_is_constant():
    e = build_extension(np.array([[2.0, 3.0]]), np.array([0.7]))
    assert e.eval(np.array([2.0, 3.0])) == 0.7
    assert e.eval(np.array([-50.0, 9.0])) == 0.7


def test_extension_rejects_coincident_nodes():
    with pytest.raises(InfeasibleInstance):
        build_extension(np.array([[0.0], [0.0]]), np.array([1.0, -1.0]))


def test_extension_shape_validation():
    with pytest.raises(DimensionMismatch):
        build_extension(np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        build_extension(np.zeros(3), np.zeros(3))


@given(st.integers(min_value=2, max_value=7), st.integers(min_value=0, max_value=10**6))
@settings(max_examples=60, deadline=None)
def test_extension_never_exceeds_declared_slope(n, seed):
    rng = derive_rng(seed, "hyp-ext")
    nodes = rng.standard_normal((n, 4))
    labels = rng.uniform(-2, 2, size=n)
    e = build_extension(nodes, labels)
    us = rng.standard_normal((64, 4)) * 3
    vs = rng.standard_normal((64, 4)) * 3
    fu, fv = e.eval_many(us), e.eval_many(vs)
    d = np.linalg.norm(us - vs, axis=1)
    ok = d > 0
    assert np.all(np.abs(fu[ok] - fv[ok]) <= e.lipschitz * d[ok] + 1e-9)


def test_verify_lipschitz_needs_pairs():
    e = build_extension(np.array([[0.0], [1.0]]), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        verify_lipschitz(e, 0, derive_rng(0, "x"))


# ---------------------------------------------------------------------------
# candidates and separation
# ---------------------------------------------------------------------------

def test_candidate_shapes_and_norms():
    c = sample_candidate(5, 12, derive_rng(3, "cand"))
    assert c.m == 1 and c.n_matrices == 2
    assert c.x.shape == (1, 5) and c.matrices.shape == (2, 12, 5)
    assert np.allclose(np.abs(c.x), 1.0 / math.sqrt(5))
    assert np.allclose(np.linalg.norm(c.x, axis=1), 1.0)


def test_candidate_guards():
    with pytest.raises(DimensionMismatch):
        sample_candidate(13, 12, derive_rng(0, "g"))
    with pytest.raises(DimensionMismatch):
        sample_candidate(0, 12, derive_rng(0, "g"))
    # h = 210 would need 2^21 matrices; refused before allocating
    with pytest.raises(InfeasibleInstance):
        sample_candidate(1, 210, derive_rng(0, "g"))
    assert estimate_candidate_bytes(1, 210, 21) == (1 << 21) * 210 * 8


def test_separation_flags_duplicate_matrices():
    a = derive_rng(5, "dup").standard_normal((10, 1)) / math.sqrt(10)
    c = ShatterCandidate(np.array([[1.0]]), np.stack([a, a]), h=10, m=1)
    rep = check_separation(c)
    assert rep.pass_count
    assert not rep.pass_separation
    assert rep.min_pair_dist_sq <= 1e-20
    assert not rep.passed


# ---------------------------------------------------------------------------
# full instances
# ---------------------------------------------------------------------------

def test_instance_d20_h20():
    inst = build_instance(20, 20, seed=7)
    assert inst.candidate.m == 2
    assert inst.candidate.n_matrices == 4
    sep = inst.separation
    assert sep.passed
    assert sep.max_frobenius_sq <= 40.0
    assert sep.min_pair_dist_sq >= SEPARATION_SQ
    rep = verify_shatter(inst)
    assert rep.passed and rep.n_cells == 8
    assert abs(rep.min_margin - 1.0) <= 1e-9
    mem = class_membership(inst)
    assert mem["within_class"]
    assert mem["lipschitz"] <= 8.0
    assert mem["output_norm"] == 1.0


def test_instance_labels_match_subsets():
    inst = build_instance(12, 12, seed=2)
    assert np.array_equal(inst.labels == 1.0, inst.subsets)
    for k in range(inst.candidate.n_matrices):
        for i in range(inst.candidate.m):
            want = 1.0 if inst.subsets[k, i] else -1.0
            assert inst.hypothesis_value(k, i) == pytest.approx(want, abs=1e-9)


def test_corrupted_label_breaks_a_cell():
    inst = build_instance(12, 12, seed=2)
    bad_labels = inst.labels.reshape(-1).copy()
    bad_labels[0] = -bad_labels[0]
    ext = build_extension(inst.extension.nodes, bad_labels)
    broken = dataclasses.replace(inst, extension=ext)
    rep = verify_shatter(broken)
    assert not rep.passed
    assert (0, 0) in rep.failures


def test_instance_seeded_reproducibility():
    a = build_instance(10, 14, seed=99)
    b = build_instance(10, 14, seed=99)
    assert a.attempts == b.attempts
    assert np.array_equal(a.candidate.x, b.candidate.x)
    assert np.array_equal(a.candidate.matrices, b.candidate.matrices)
    c = build_instance(10, 14, seed=100)
    assert not np.array_equal(a.candidate.matrices, c.candidate.matrices)


def test_instance_bundle_roundtrip_through_stdlib_json():
    inst = build_instance(8, 10, seed=4)
    blob = json.dumps(inst.to_jsonable())
    back = instance_from_jsonable(json.loads(blob))
    assert np.array_equal(back.candidate.x, inst.candidate.x)
    assert np.array_equal(back.candidate.matrices, inst.candidate.matrices)
    assert np.array_equal(back.subsets, inst.subsets)
    assert back.extension.lipschitz == inst.extension.lipschitz
    assert verify_shatter(back).passed


def test_build_instance_guards():
    with pytest.raises(ValueError):
        build_instance(4, 8, seed=0, max_retries=0)
    assert FEASIBLE_M == 20
