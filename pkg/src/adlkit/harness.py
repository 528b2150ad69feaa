"""Statistical and exact verification of estimator contracts.

Two engines: ``mc_contract`` runs a batched Monte Carlo check of a declared
(mean, variance bound, expected length bound) contract with fixed gates, and
``enumerate_exact`` computes exact moments of small finite constructions by
weighted enumeration.  On top of them sit the named verification suites the
command-line runner dispatches to; every row a suite emits carries a
``check`` tag naming the contract it verifies, so a failing run can list
exactly what broke.

Reproducibility: trials are split into fixed-size chunks, each chunk draws
from an independent child stream derived from (seed, chunk index), and the
reduction uses exact summation in chunk order — so reports are bit-for-bit
identical for a given seed regardless of worker count (``ADL_THREADS``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .bitcodec import gamma_length, signed_length
from .errors import AdlError, EnumerationTooLarge, RestrictionError
from .estimators import (
    _grid_widths,
    batch_neuron_evals,
    batch_squeezer_evals,
    compute_h1_values,
    h1_reference,
    level_mean_outcomes,
    neuron_decode,
    neuron_encode,
    neuron_sample,
    rmf_decode,
    rmf_encode,
    rmf_entry_outcomes,
    rmf_make,
    residual_bound,
)
from .exact import ENUMERATION_CAP, exact_moments
from .model import (
    Activation,
    HypoParams,
    Hypothesis,
    SampleSet,
    activation_by_name,
    ceil_log2_int,
    derive_rng,
    eval_network,
)
from .network import (
    adl_bound,
    averaging_count,
    batch_network_evals,
    batch_unit_evals,
    bound_report,
    coefficient_outcomes,
    constant_part_bound,
    expected_neuron_symbols,
    gen_bound,
    network_decode,
    network_encode,
    network_sample,
    network_variance_bound,
    neuron_probs,
    unit_family_count,
)
from .shatter import (
    ShatterInstance,
    build_extension,
    build_instance,
    check_separation,
    class_membership,
    instance_from_jsonable,
    verify_lipschitz,
    verify_shatter,
)
from .sketch import (
    SketchConfig,
    batch_avg_inners,
    batch_sketch_inners,
    draw_inner_outcomes,
    quantize_scale,
    sketch_avg,
    sketch_contract,
    sketch_decode,
    sketch_encode,
    sketch_once,
)

CHUNK = 1 << 16

MEAN_GATE_SIGMAS = 4.0
VAR_SLACK = 1.05
DEFAULT_LEN_SLACK = 0.05

CRITERIA = ("|mean - truth| <= 4*SE + 1e-12*max(1,|truth|); "
            "variance <= bound * 1.05 (one-sided); "
            "mean length <= bound * (1 + slack)")


def thread_count() -> int:
    raw = os.environ.get("ADL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Monte Carlo contract checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MCReport:
    """Outcome of one Monte Carlo contract check, gates recorded verbatim."""

    n_trials: int
    mean: float
    variance: float
    se: float
    z: float
    truth: float
    var_bound: float
    mean_len: float
    len_bound: float | None
    len_slack: float
    pass_mean: bool
    pass_var: bool
    pass_len: bool
    fail_reason: str
    criteria: str = CRITERIA

    @property
    def passed(self) -> bool:
        return self.pass_mean and self.pass_var and self.pass_len

    def to_jsonable(self) -> dict:
        return {"n_trials": self.n_trials, "mean": self.mean,
                "variance": self.variance, "se": self.se, "z": self.z,
                "truth": self.truth, "var_bound": self.var_bound,
                "mean_len": self.mean_len, "len_bound": self.len_bound,
                "len_slack": self.len_slack, "pass_mean": self.pass_mean,
                "pass_var": self.pass_var, "pass_len": self.pass_len,
                "passed": self.passed, "fail_reason": self.fail_reason,
                "criteria": self.criteria}


Sampler = Callable[[np.random.Generator, int], object]


def _run_chunk(sampler: Sampler, seed: int, ci: int, n: int, pivot: float):
    rng = derive_rng(seed, "mc-chunk", ci)
    out = sampler(rng, n)
    if isinstance(out, tuple):
        vals, lens = out
    else:
        vals, lens = out, None
    vals = np.asarray(vals, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(vals))
    first_bad = int(bad[0]) if len(bad) else -1
    # Sums are taken of (value - pivot) so that an estimator sitting exactly
    # at the pivot accumulates exact zeros instead of cancellation noise.
    dv = vals - pivot
    sv = math.fsum(dv.tolist())
    sv2 = math.fsum((dv * dv).tolist())
    sl = math.fsum(np.asarray(lens, dtype=np.float64).tolist()) if lens is not None else math.nan
    return sv, sv2, sl, first_bad, len(vals)


def mc_contract(sampler: Sampler, truth: float, var_bound: float,
                len_bound: float | None, N: int, seed: int,
                len_slack: float = DEFAULT_LEN_SLACK) -> MCReport:
    """Monte Carlo gate: unbiasedness within 4 SE, one-sided variance with
    5% slack, and (when bounded) mean encoded length within declared slack.

    ``sampler(rng, n)`` returns ``n`` values or ``(values, lengths)``.
    Moment sums are accumulated relative to ``truth``, so a deterministic
    estimator equal to its target reports exactly zero variance.
    """
    if N < 1000:
        raise ValueError("N must be at least 10^3")
    if not math.isfinite(truth):
        raise ValueError("truth must be finite")
    n_chunks = (N + CHUNK - 1) // CHUNK
    sizes = [min(CHUNK, N - ci * CHUNK) for ci in range(n_chunks)]
    workers = thread_count()
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda ci: _run_chunk(sampler, seed, ci, sizes[ci], truth),
                range(n_chunks)))
    else:
        results = [_run_chunk(sampler, seed, ci, sizes[ci], truth)
                   for ci in range(n_chunks)]
    total = sum(r[4] for r in results)
    first_bad = -1
    for ci, r in enumerate(results):
        if r[3] >= 0:
            first_bad = ci * CHUNK + r[3]
            break
    s1 = math.fsum(r[0] for r in results)
    sv2 = math.fsum(r[1] for r in results)
    mean = truth + s1 / total
    variance = max((sv2 - s1 * s1 / total) / (total - 1), 0.0)
    se = math.sqrt(variance / total)
    have_lens = not math.isnan(results[0][2])
    mean_len = (math.fsum(r[2] for r in results) / total) if have_lens else math.nan
    if first_bad >= 0:
        return MCReport(total, mean, variance, se, math.inf, truth, var_bound,
                        mean_len, len_bound, len_slack, False, False, False,
                        f"non-finite sample at trial {first_bad}")
    dev = abs(mean - truth)
    tol = MEAN_GATE_SIGMAS * se + 1e-12 * max(1.0, abs(truth))
    z = 0.0 if dev == 0.0 else (math.inf if se == 0.0 else (mean - truth) / se)
    pass_mean = dev <= tol
    pass_var = variance <= var_bound * VAR_SLACK
    if len_bound is None:
        pass_len = True
    else:
        pass_len = have_lens and mean_len <= len_bound * (1.0 + len_slack)
    reasons = []
    if not pass_mean:
        reasons.append(f"mean off by {dev:.3g} (> {tol:.3g})")
    if not pass_var:
        reasons.append(f"variance {variance:.6g} > {var_bound * VAR_SLACK:.6g}")
    if not pass_len:
        reasons.append(f"mean length {mean_len:.6g} > "
                       f"{(len_bound or 0) * (1 + len_slack):.6g}")
    return MCReport(total, mean, variance, se, z, truth, var_bound, mean_len,
                    len_bound, len_slack, pass_mean, pass_var, pass_len,
                    "; ".join(reasons))


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactReport:
    """Exact moments of a finite construction by weighted enumeration."""

    n_outcomes: int
    mean: float
    variance: float
    expected_length: float
    prob_total: float

    def to_jsonable(self) -> dict:
        return {"n_outcomes": self.n_outcomes, "mean": self.mean,
                "variance": self.variance,
                "expected_length": self.expected_length,
                "prob_total": self.prob_total}


def enumerate_exact(outcomes: Iterable[tuple], cap: int = ENUMERATION_CAP
                    ) -> ExactReport:
    """Exact mean/variance/expected length over ``(p, value[, length])``
    outcome tuples.  Probabilities must sum to 1 within 1e-12; spaces larger
    than the cap are refused."""
    ps: list[float] = []
    pv: list[float] = []
    pvv: list[float] = []
    pl: list[float] = []
    have_len = False
    count = 0
    for out in outcomes:
        p, v = float(out[0]), float(out[1])
        count += 1
        if count > cap:
            raise EnumerationTooLarge(count, cap)
        ps.append(p)
        pv.append(p * v)
        pvv.append(p * v * v)
        if len(out) > 2:
            have_len = True
            pl.append(p * float(out[2]))
    total = math.fsum(ps)
    if abs(total - 1.0) > 1e-12:
        raise AdlError(f"enumerated probabilities sum to {total!r}, not 1")
    mean = math.fsum(pv)
    variance = max(math.fsum(pvv) - mean * mean, 0.0)
    elen = math.fsum(pl) if have_len else math.nan
    return ExactReport(count, mean, variance, elen, total)


# ---------------------------------------------------------------------------
# Row plumbing shared by the suites
# ---------------------------------------------------------------------------

def _mc_row(suite: str, check: str, report: MCReport) -> dict:
    row = {"suite": suite, "check": check, "kind": "mc"}
    row.update(report.to_jsonable())
    return row


def _exact_row(suite: str, check: str, report: ExactReport, truth: float,
               var_bound: float, tol: float = 1e-9) -> dict:
    passed = (abs(report.mean - truth) <= tol
              and report.variance <= var_bound + tol)
    return {"suite": suite, "check": check, "kind": "exact",
            "passed": passed, "n_outcomes": report.n_outcomes,
            "mean": report.mean, "truth": truth,
            "variance": report.variance, "var_bound": var_bound,
            "expected_length": report.expected_length,
            "fail_reason": "" if passed else
            f"exact mean {report.mean!r} vs {truth!r} or variance "
            f"{report.variance!r} > {var_bound!r}"}


def _bool_row(suite: str, check: str, passed: bool, detail: str = "",
              **extra) -> dict:
    row = {"suite": suite, "check": check, "kind": "structural",
           "passed": bool(passed), "fail_reason": "" if passed else detail}
    if passed and detail:
        row["detail"] = detail
    row.update(extra)
    return row


def sketch_symbol_budget(norm: float, cfg: SketchConfig) -> float:
    """Declared expected payload symbols of one sketch: exact scale header
    plus ``q_B`` draws at (index width + sign + entropy bound on the gamma
    code of the grid index, ``log2 d + 3``)."""
    if norm <= 0.0:
        return 1.0
    scale = quantize_scale(norm, cfg.mantissa_bits)
    return 1.0 + scale.symbols + cfg.q_B * (
        cfg.index_width + 1.0 + math.log2(cfg.d) + 3.0)


def squeezer_symbol_budget(norm: float, k: int, cfg: SketchConfig) -> float:
    """Flags plus the (5/2) k n_B expected-sketch-count budget."""
    return k + 2.5 * k * sketch_symbol_budget(norm, cfg)


def hypothesis_network_symbols(h: Hypothesis, params: HypoParams, m: int,
                               act: Activation, cfg: SketchConfig) -> float:
    """Expected encoded symbols of one network realization of ``h``:
    exact expectation over picks and coefficient bumps, budget bound for
    the neuron bundle."""
    probs = neuron_probs(h.v)
    k = ceil_log2_int(cfg.d * m)
    n_avg = averaging_count(params.B, k)
    sigma0 = act.value_at_zero
    Cg = constant_part_bound(sigma0, h.v)
    if Cg > 0:
        wn, wb, _, _ = _grid_widths(4.0, Cg)
        gv = 1 + gamma_length(wn) + gamma_length(wb) + 64 + wn + wb
    else:
        gv = 1.0
    total = float(ceil_log2_int(h.T)) + gv
    for j in range(h.T):
        ratio = float(h.v[j]) / float(probs[j])
        lo = math.floor(ratio)
        frac = ratio - lo
        elen = (1 - frac) * signed_length(lo) + frac * signed_length(lo + 1)
        dist = float(np.linalg.norm(h.W[j] - params.W0[j]))
        total += float(probs[j]) * (
            elen + n_avg * expected_neuron_symbols(cfg.d, m, act.lipschitz,
                                                   params.B, dist))
    return total


def hypothesis_unit_symbols(h: Hypothesis, params: HypoParams, m: int,
                            act: Activation, cfg: SketchConfig) -> float:
    L, B = act.lipschitz, params.B
    W0_F = float(np.linalg.norm(params.W0))
    total = 0.0
    for v_fam, v_norm in ((h.v - params.v0, params.r),
                          (params.v0.copy(), float(np.linalg.norm(params.v0)))):
        count = unit_family_count(L, B, v_norm, params.R, W0_F)
        total += count * hypothesis_network_symbols(
            Hypothesis(h.W, v_fam), params, m, act, cfg)
    return total


# ---------------------------------------------------------------------------
# Suite: sketches, grid memorizer, telescoping chain
# ---------------------------------------------------------------------------

def sketch_suite(seed: int, trials: int = 200_000) -> list[dict]:
    rows: list[dict] = []
    cfg = SketchConfig(d=2, B=1.0)
    u = np.array([0.6, 0.8])
    x = np.array([0.8, -0.6])
    w0 = np.array([0.2, -0.1])
    norm = float(np.linalg.norm(u))

    truth, vb = sketch_contract(u, x, 1)
    rows.append(_exact_row(
        "sketch", "draw-exact-mean",
        enumerate_exact(draw_inner_outcomes(u, x, cfg)),
        truth, 2.0 * cfg.B ** 2 * norm ** 2))
    rows.append(_mc_row("sketch", "single-unbiased-var-len", mc_contract(
        lambda rng, n: batch_sketch_inners(u, x, cfg, rng, n),
        truth, vb, sketch_symbol_budget(norm, cfg), trials, seed)))

    q = 4
    truth_avg = float(np.dot(u, x) + np.dot(w0, x))
    _, vb_avg = sketch_contract(u, x, q)
    rows.append(_mc_row("sketch", "averaged-q4", mc_contract(
        lambda rng, n: batch_avg_inners(u + w0, w0, x, q, cfg, rng, n),
        truth_avg, vb_avg, q * sketch_symbol_budget(norm, cfg),
        trials, derive_rng(seed, 1).integers(1 << 31))))

    rows.append(_exact_row(
        "sketch", "zero-vector-empty-marker",
        enumerate_exact(draw_inner_outcomes(np.zeros(2), x, cfg)), 0.0, 0.0))

    rng = derive_rng(seed, "sketch-roundtrip")
    ok = True
    for _ in range(50):
        s = sketch_once(u, cfg, rng)
        back = sketch_decode(sketch_encode(s), cfg)
        if back.inner(x) != s.inner(x):
            ok = False
            break
        a = sketch_avg(u + w0, w0, 3, cfg, rng)
        back_a = sketch_decode(sketch_encode(a), cfg, w0=w0)
        if back_a.value(x) != a.value(x):
            ok = False
            break
    rows.append(_bool_row("sketch", "encode-decode-roundtrip", ok,
                          "decoded evaluation differs from original"))

    rows.append(_exact_row(
        "rmf", "entry-exact-example",
        enumerate_exact(rmf_entry_outcomes(0.6, 1.0, 4.0)), 0.6, 0.25))
    rng = derive_rng(seed, "rmf-roundtrip")
    vals = np.array([0.6, -0.4, 1.0, 0.0])
    r = rmf_make(vals, 1.0, 4.0, rng)
    back = rmf_decode(rmf_encode(r), len(vals))
    rows.append(_bool_row(
        "rmf", "encode-decode-roundtrip",
        bool(np.array_equal(back.values(), r.values())),
        "decoded memorizer values differ",
        nominal_symbols=r.nominal_symbols(), entry_symbols=r.entry_symbols))

    act = activation_by_name("relu")
    k = 2
    w = u + w0
    dist = float(np.linalg.norm(w - w0))
    exact = enumerate_exact(
        (p, act(v)) for p, v in level_mean_outcomes(w, w0, x, k, cfg))
    rows.append(_mc_row("squeezer", "chain-mean-var-len", mc_contract(
        lambda rng, n: batch_squeezer_evals(w, w0, x, k, cfg, act, rng, n),
        exact.mean, 3.0 * (act.lipschitz * dist) ** 2 * k,
        squeezer_symbol_budget(dist, k, cfg),
        trials, derive_rng(seed, 2).integers(1 << 31))))
    return rows


# ---------------------------------------------------------------------------
# Suite: single-neuron estimator
# ---------------------------------------------------------------------------

def _neuron_setup():
    cfg = SketchConfig(d=2, B=1.0)
    act = activation_by_name("relu")
    A = SampleSet(np.array([[0.8, -0.6], [-0.28, 0.96]]))
    w = np.array([0.9, 0.35])
    w0 = np.array([0.5, 0.6])
    return cfg, act, A, w, w0


def neuron_suite(seed: int, trials: int = 100_000) -> list[dict]:
    rows: list[dict] = []
    cfg, act, A, w, w0 = _neuron_setup()
    k = ceil_log2_int(cfg.d * A.m)
    dist = float(np.linalg.norm(w - w0))
    data = compute_h1_values(w, w0, A, act, k, cfg)
    len_bound = expected_neuron_symbols(cfg.d, A.m, act.lipschitz, cfg.B, dist)
    for i in range(A.m):
        truth = float(act(np.dot(w, A[i])))
        rows.append(_mc_row("neuron", f"unbiased-var-len-x{i}", mc_contract(
            lambda rng, n, i=i: batch_neuron_evals(
                w, w0, A, act, cfg, i, rng, n, h1_data=data),
            truth, 5.0 * (act.lipschitz * dist) ** 2 * k,
            len_bound, trials, derive_rng(seed, 10 + i).integers(1 << 31))))

    est = h1_reference(w, w0, A[0], k, cfg, act, mode="exact")
    mc = h1_reference(w, w0, A[0], k, cfg, act, mode="mc", n_mc=200_000,
                      rng=derive_rng(seed, "h1-mc"))
    agree = abs(est.value - mc.value) <= 4.0 * mc.se + 1e-12
    rows.append(_bool_row(
        "neuron", "residual-exact-vs-mc", agree,
        f"exact {est.value:.6g} vs mc {mc.value:.6g} (se {mc.se:.3g})",
        exact_value=est.value, mc_value=mc.value, mc_se=mc.se,
        residual_cap=residual_bound(act.lipschitz, dist, cfg.d, A.m)))

    rng = derive_rng(seed, "neuron-restriction")
    fired = None
    for _ in range(200):
        nr = neuron_sample(w, w0, A, act, cfg, rng, h1_data=data)
        if nr.gate:
            fired = nr
            break
    if fired is None:
        rows.append(_bool_row("neuron", "restriction-off-sample", False,
                              "no fired gate in 200 samples (p=1/4 each)"))
    else:
        try:
            fired.eval(x=np.array([0.1, 0.2]))
            rows.append(_bool_row("neuron", "restriction-off-sample", False,
                                  "off-sample evaluation did not raise"))
        except RestrictionError:
            rows.append(_bool_row("neuron", "restriction-off-sample", True))

    rng = derive_rng(seed, "neuron-roundtrip")
    ok = True
    for _ in range(30):
        nr = neuron_sample(w, w0, A, act, cfg, rng, h1_data=data)
        back = neuron_decode(neuron_encode(nr), cfg, w0, A, act)
        if any(back.eval(x_index=i) != nr.eval(x_index=i) for i in range(A.m)):
            ok = False
            break
    rows.append(_bool_row("neuron", "encode-decode-roundtrip", ok,
                          "decoded neuron evaluation differs"))

    truth0 = float(act(np.dot(w0, A[0])))
    rows.append(_mc_row("neuron", "degenerate-w-equals-w0", mc_contract(
        lambda rng, n: batch_neuron_evals(w0, w0, A, act, cfg, 0, rng, n),
        truth0, 0.0, None, 2000, derive_rng(seed, 11).integers(1 << 31))))
    return rows


# ---------------------------------------------------------------------------
# Suite: width-T network and unit estimator
# ---------------------------------------------------------------------------

def _network_setup():
    cfg = SketchConfig(d=2, B=1.0)
    act = activation_by_name("relu")
    A = SampleSet(np.array([[0.8, -0.6], [-0.28, 0.96]]))
    W0 = np.array([[0.5, 0.6], [-0.3, 0.2], [0.0, 0.0], [0.1, -0.4]])
    v0 = np.array([0.3, -0.2, 0.5, 0.0])
    W = W0 + np.array([[0.4, -0.25], [0.2, 0.3], [-0.35, 0.15], [0.25, 0.2]])
    v = v0 + np.array([0.2, -0.05, 0.3, 0.1])
    params = HypoParams(T=4, d=2, L=1.0, B=1.0, R=0.8, r=0.5, W0=W0, v0=v0)
    return cfg, act, A, params, Hypothesis(W, v)


def network_suite(seed: int, trials: int = 100_000,
                  unit_trials: int = 10_000) -> list[dict]:
    rows: list[dict] = []
    cfg, act, A, params, h = _network_setup()
    dist_F = float(np.linalg.norm(h.W - params.W0))
    W0_F = float(np.linalg.norm(params.W0))
    v_norm = float(np.linalg.norm(h.v))
    var_bound = network_variance_bound(act.lipschitz, params.B, v_norm,
                                       dist_F, W0_F)
    k = ceil_log2_int(cfg.d * A.m)
    cache = {}
    for j in range(h.T):
        cache[j] = compute_h1_values(h.W[j], params.W0[j], A, act, k, cfg)
    len_bound = hypothesis_network_symbols(h, params, A.m, act, cfg)
    for i in range(A.m):
        truth = eval_network(h, A[i], act)
        rows.append(_mc_row("network", f"unbiased-var-len-x{i}", mc_contract(
            lambda rng, n, i=i: batch_network_evals(
                h, params, A, act, cfg, i, rng, n, h1_cache=cache),
            truth, var_bound, len_bound, trials,
            derive_rng(seed, 20 + i).integers(1 << 31))))

    probs = neuron_probs(h.v)
    coeff_ok = True
    detail = ""
    for j in range(h.T):
        ratio = float(h.v[j]) / float(probs[j])
        rep = enumerate_exact(
            (p, float(c)) for p, c in coefficient_outcomes(float(h.v[j]),
                                                           float(probs[j])))
        second = rep.variance + rep.mean ** 2
        if abs(rep.mean - ratio) > 1e-9 or second > ratio ** 2 + 0.25 + 1e-9:
            coeff_ok = False
            detail = (f"neuron {j}: mean {rep.mean!r} vs {ratio!r}, "
                      f"second moment {second!r} > {ratio ** 2 + 0.25!r}")
            break
    rows.append(_bool_row("network", "coefficient-rounding-exact", coeff_ok,
                          detail))

    h1 = Hypothesis(h.W[:1], h.v[:1])
    p1 = HypoParams(T=1, d=2, L=1.0, B=1.0, R=0.8, r=0.5,
                    W0=params.W0[:1], v0=params.v0[:1])
    truth1 = eval_network(h1, A[0], act)
    vb1 = network_variance_bound(act.lipschitz, p1.B,
                                 float(np.linalg.norm(h1.v)),
                                 float(np.linalg.norm(h1.W - p1.W0)),
                                 float(np.linalg.norm(p1.W0)))
    rows.append(_mc_row("network", "width-1-reduction", mc_contract(
        lambda rng, n: batch_network_evals(h1, p1, A, act, cfg, 0, rng, n,
                                           h1_cache=cache),
        truth1, vb1, None, max(trials // 2, 1000),
        derive_rng(seed, 23).integers(1 << 31))))

    ident = activation_by_name("identity")
    h_id = Hypothesis(params.W0.copy(), params.v0.copy())
    truth_id = eval_network(h_id, A[0], ident)
    vb_id = network_variance_bound(ident.lipschitz, params.B,
                                   float(np.linalg.norm(params.v0)), 0.0, W0_F)
    rows.append(_mc_row("network", "identity-at-base-point", mc_contract(
        lambda rng, n: batch_network_evals(h_id, params, A, ident, cfg, 0,
                                           rng, n),
        truth_id, vb_id, None, 20_000,
        derive_rng(seed, 24).integers(1 << 31))))

    h_zero_v = Hypothesis(h.W, np.zeros(h.T))
    rows.append(_mc_row("network", "zero-v-constant-only", mc_contract(
        lambda rng, n: batch_network_evals(h_zero_v, params, A, act, cfg, 0,
                                           rng, n, h1_cache=cache),
        eval_network(h_zero_v, A[0], act), 0.5, None, 20_000,
        derive_rng(seed, 25).integers(1 << 31))))

    truth_u = eval_network(h, A[0], act)
    rows.append(_mc_row("network", "unit-estimator-var-le-1", mc_contract(
        lambda rng, n: batch_unit_evals(h, params, A, act, cfg, 0, rng, n),
        truth_u, 1.0, hypothesis_unit_symbols(h, params, A.m, act, cfg),
        unit_trials, derive_rng(seed, 26).integers(1 << 31))))

    rng = derive_rng(seed, "network-roundtrip")
    ok = True
    one_neuron = True
    for _ in range(10):
        nr = network_sample(h, params, A, act, cfg, rng, h1_cache=cache)
        msg = network_encode(nr)
        back = network_decode(msg, cfg, params, A, act)
        if back.pick.index != nr.pick.index or len(msg) != nr.payload_symbols + 2:
            ok = False
            break
        if any(back.eval(x_index=i) != nr.eval(x_index=i) for i in range(A.m)):
            ok = False
            break
        if back.n_avg != averaging_count(params.B, k):
            one_neuron = False
    rows.append(_bool_row("network", "encode-decode-roundtrip", ok,
                          "decoded network evaluation differs"))
    rows.append(_bool_row("network", "single-neuron-block", one_neuron,
                          "bundle size disagrees with the class formula"))
    return rows


# ---------------------------------------------------------------------------
# Suite: bound calculators
# ---------------------------------------------------------------------------

def bounds_suite(seed: int = 0) -> tuple[list[dict], list[dict]]:
    """(check rows, sweep rows).  Sweep rows carry T, d, m, adl_bits,
    gen_gap for plotting."""
    rows: list[dict] = []
    val = gen_bound(4, 4, 1.0, 1.0, 2.0 / math.e ** 2)
    rows.append(_bool_row("bounds", "gen-bound-closed-form",
                          abs(val - 5.0) <= 1e-12, f"got {val!r}", value=val))
    rows.append(_bool_row("bounds", "gen-bound-zero-bits",
                          abs(gen_bound(0, 4, 1.0, 1.0, 0.5)
                              - math.sqrt(2 * math.log(4.0) / 4)) <= 1e-12,
                          "n=0 should leave only the confidence term"))
    gaps = [gen_bound(64, 10 ** e, 1.0, 1.0, 0.05) for e in (4, 6, 8, 10, 12)]
    shrinking = all(a > b for a, b in zip(gaps, gaps[1:]))
    rows.append(_bool_row("bounds", "gen-bound-vanishes",
                          shrinking and gaps[-1] < 0.01,
                          f"gaps over m=1e4..1e12: {gaps!r}", value=gaps[-1]))

    def mk(L=1.0, B=1.0, R=1.0, r=1.0, d=4, T=8):
        return HypoParams(T=T, d=d, L=L, B=B, R=R, r=r,
                          W0=np.zeros((T, d)), v0=np.zeros(T))

    base = adl_bound(mk(), 8)[0]
    mono_ok = True
    detail = ""
    for name, variant in (
            ("L", mk(L=2.0)), ("B", mk(B=2.0)), ("R", mk(R=2.0)),
            ("r", mk(r=2.0))):
        if adl_bound(variant, 8)[0] < base:
            mono_ok = False
            detail = f"doubling {name} decreased the bound"
            break
    for m2 in (16, 32, 64):
        if adl_bound(mk(), m2)[0] < adl_bound(mk(), m2 // 2)[0]:
            mono_ok = False
            detail = f"doubling m to {m2} decreased the bound"
            break
    rows.append(_bool_row("bounds", "adl-monotone-on-doubling", mono_ok,
                          detail))

    t_bits = [adl_bound(mk(T=2 ** e), 8)[0] for e in range(4, 11)]
    steps = [b - a for a, b in zip(t_bits, t_bits[1:])]
    max_step = max(steps)
    p = mk()
    W0_F = 0.0
    n_total = (unit_family_count(p.L, p.B, p.r, p.R, W0_F)
               + unit_family_count(p.L, p.B, 0.0, p.R, W0_F))
    # each width doubling can add at most 6 symbols per encoded realization:
    # one index bit, a gamma step on the coefficient, and a wider constant
    # memorizer cell plus its header
    t_ok = (t_bits[-1] - t_bits[0] <= 6 * max_step + 1e-9
            and max_step <= 6 * n_total + 1e-9)
    rows.append(_bool_row("bounds", "adl-log-T-scaling", t_ok,
                          f"T-doubling steps {steps!r} vs realization count "
                          f"{n_total}", growth=t_bits[-1] - t_bits[0],
                          max_step=max_step))

    sweep: list[dict] = []
    for T in (16, 64, 256, 1024):
        for d, m in ((4, 16), (16, 64), (64, 256)):
            p = mk(d=d, T=T)
            bits, _ = adl_bound(p, m)
            sweep.append({"T": T, "d": d, "m": m, "adl_bits": bits,
                          "gen_gap": gen_bound(bits, m, 1.0, 1.0, 0.05)})
    return rows, sweep


# ---------------------------------------------------------------------------
# Suite: shattering
# ---------------------------------------------------------------------------

def shatter_suite(seed: int, d: int = 20, h: int = 20,
                  n_pairs: int = 10_000, max_retries: int = 1000,
                  bundle: dict | None = None
                  ) -> tuple[list[dict], ShatterInstance]:
    """Build (or reload from a saved bundle) and fully verify an instance."""
    rows: list[dict] = []
    ext = build_extension(np.array([[0.0], [1.0]]), np.array([1.0, -1.0]))
    ok = (ext.eval(np.array([0.0])) == 1.0
          and ext.eval(np.array([1.0])) == -1.0
          and abs(ext.eval(np.array([0.5]))) <= 1e-12
          and abs(ext.eval(np.array([10.0])) - (-19.0)) <= 1e-12)
    rows.append(_bool_row("shatter", "extension-1d-example", ok,
                          "1-D max-formula values off",
                          lipschitz=ext.lipschitz))

    if bundle is not None:
        inst = instance_from_jsonable(bundle)
        sep = check_separation(inst.candidate)
    else:
        inst = build_instance(d, h, seed, max_retries=max_retries)
        sep = inst.separation
    rows.append(_bool_row(
        "shatter", "separation", sep.passed,
        f"min dist^2 {sep.min_pair_dist_sq!r}, max frob^2 "
        f"{sep.max_frobenius_sq!r}",
        min_pair_dist_sq=sep.min_pair_dist_sq,
        max_frobenius_sq=sep.max_frobenius_sq, attempts=inst.attempts))

    rep = verify_shatter(inst)
    rows.append(_bool_row(
        "shatter", "all-patterns-margin-1", rep.passed,
        f"min margin {rep.min_margin!r}, failures {rep.failures[:4]!r}",
        min_margin=rep.min_margin, n_cells=rep.n_cells))

    lip = verify_lipschitz(inst.extension, n_pairs,
                           derive_rng(seed, "lipschitz-pairs"))
    rows.append(_bool_row(
        "shatter", "difference-quotients", lip.passed,
        f"max ratio {lip.max_ratio!r} > {lip.bound!r}",
        max_ratio=lip.max_ratio, bound=lip.bound, n_pairs=lip.n_pairs))

    member = class_membership(inst)
    rows.append(_bool_row(
        "shatter", "class-membership", member["within_class"],
        f"budget facts: {member!r}", **{k: v for k, v in member.items()
                                        if k != "within_class"}))
    return rows, inst


# ---------------------------------------------------------------------------
# Suite: concentration tails
# ---------------------------------------------------------------------------

def _tail_row(check: str, epsilon: float, dim: int, bound: float,
              freq: float, N: int) -> dict:
    vacuous = bound >= 1.0
    slack = 0.0 if vacuous else 3.0 * math.sqrt(bound * (1.0 - bound) / N)
    passed = vacuous or freq <= bound + slack
    return {"suite": "concentration", "check": check, "kind": "tail",
            "epsilon": epsilon, "dim": dim, "bound": bound,
            "frequency": freq, "slack": slack, "n_trials": N,
            "vacuous": vacuous, "passed": passed,
            "fail_reason": "" if passed else
            f"tail frequency {freq!r} > {bound + slack!r}"}


def concentration_suite(d: int, h: int, N: int, seed: int) -> list[dict]:
    """Empirical tail frequencies against the analytic exponential bounds.

    Four families: squared-norm upper tail of a Gaussian vector, inner
    product of two sign vectors, squared-norm lower tail of a Gaussian
    matrix acting on a fixed unit vector, and the distance of two Gaussian
    matrices acting on two fixed unit vectors — at the tail levels the
    separated-set construction actually uses.
    """
    if N < 10_000:
        raise ValueError("N must be at least 10^4")
    x_unit = np.full(d, 1.0 / math.sqrt(d))
    v_unit = np.array([(-1.0) ** i for i in range(d)]) / math.sqrt(d)

    hits_vec = 0
    hits_sign = 0
    hits_mat = 0
    hits_pair = 0
    done = 0
    ci = 0
    while done < N:
        n = min(1024, N - done)
        rng = derive_rng(seed, "concentration", ci)
        g = rng.standard_normal((n, d))
        hits_vec += int(np.sum(np.sum(g * g, axis=1) > 2.0 * d))
        su = rng.integers(0, 2, size=(n, d)) * 2 - 1
        sv = rng.integers(0, 2, size=(n, d)) * 2 - 1
        hits_sign += int(np.sum(np.sum(su * sv, axis=1) >= d / 2.0))
        W = rng.standard_normal((n, h, d))
        wx = W @ x_unit
        hits_mat += int(np.sum(np.sum(wx * wx, axis=1) < h / 16.0))
        M = rng.standard_normal((n, h, d))
        Nn = rng.standard_normal((n, h, d))
        diff = M @ x_unit - Nn @ v_unit
        hits_pair += int(np.sum(np.sum(diff * diff, axis=1) < h / 16.0))
        done += n
        ci += 1

    return [
        _tail_row("gaussian-vector-upper", 1.0, d, math.exp(-d / 6.0),
                  hits_vec / N, N),
        _tail_row("sign-inner-product", 0.5, d, math.exp(-d / 8.0),
                  hits_sign / N, N),
        _tail_row("gaussian-matrix-lower", 15.0 / 16.0, h,
                  math.exp(-(15.0 / 16.0) ** 2 * h / 6.0), hits_mat / N, N),
        _tail_row("gaussian-matrix-pair", 31.0 / 32.0, h,
                  math.exp(-(31.0 / 32.0) ** 2 * h / 6.0), hits_pair / N, N),
    ]


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def run_suite(name: str, seed: int, config: dict) -> dict:
    """Run one named suite; returns rows, overall pass, and extras."""
    extras: dict = {}
    if name == "sketch-verify":
        rows = sketch_suite(seed, trials=int(config.get("trials", 200_000)))
    elif name == "neuron-verify":
        rows = neuron_suite(seed, trials=int(config.get("trials", 100_000)))
    elif name == "network-verify":
        rows = network_suite(seed, trials=int(config.get("trials", 100_000)),
                             unit_trials=int(config.get("unit_trials", 10_000)))
    elif name == "bounds":
        rows, sweep = bounds_suite(seed)
        extras["sweep"] = sweep
        T, d = int(config.get("T", 1024)), int(config.get("d", 50))
        p = HypoParams(
            T=T, d=d,
            L=float(config.get("L", 1.0)), B=float(config.get("B", 1.0)),
            R=float(config.get("R", 2.0)), r=float(config.get("r", 1.0)),
            W0=np.zeros((T, d)), v0=np.zeros(T))
        act = activation_by_name(str(config.get("activation", "relu")))
        extras["bound_report"] = bound_report(
            p, int(config.get("m", 1000)),
            delta=float(config.get("delta", 0.05)),
            sigma0=act.value_at_zero).to_jsonable()
    elif name == "shatter":
        rows, inst = shatter_suite(
            seed, d=int(config.get("d", 20)), h=int(config.get("h", 20)),
            n_pairs=int(config.get("n_pairs", 10_000)),
            max_retries=int(config.get("max_retries", 1000)),
            bundle=config.get("bundle_obj"))
        extras["instance_bundle"] = inst.to_jsonable()
    elif name == "concentration":
        rows = concentration_suite(d=int(config.get("d", 50)),
                                   h=int(config.get("h", 50)),
                                   N=int(config.get("trials", 20_000)),
                                   seed=seed)
    else:
        raise ValueError(f"unknown suite '{name}'")
    return {"suite": name, "rows": rows,
            "passed": all(r["passed"] for r in rows), **extras}
