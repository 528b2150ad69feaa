"""Shattering constructions for the width-scaling lower bound.

Random well-separated point sets, the max-formula Lipschitz extension that
interpolates arbitrary labels on them, and the end-to-end check that a
two-layer class with a crafted activation realizes every sign pattern on
``m = max(1, floor(h/10))`` points with margin 1.

The construction: ``m`` sign vectors ``x^i`` with coordinates ``±1/sqrt(d)``
and ``2^m`` Gaussian matrices ``A^s`` scaled by ``1/sqrt(h)``.  With high
probability every matrix has squared Frobenius norm at most ``2d`` and the
``m 2^m`` hidden images ``A^s x^i`` are pairwise at squared distance at
least ``1/16``.  Labelling image ``(s, i)`` by whether ``i`` lies in the
``s``-th subset of ``[m]`` and interpolating with a Lipschitz extension
``f`` gives hypotheses ``u -> f(A^s u)`` (read through the first output
coordinate) that shatter the ``x^i`` with margin exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InfeasibleInstance
from .model import derive_rng

GAUSSIAN_ALGORITHM = "numpy PCG64 standard_normal (ziggurat)"

FEASIBLE_M = 20
SEPARATION_SQ = 1.0 / 16.0


def sample_count(h: int) -> int:
    """Points to shatter at width ``h``: one tenth, floored, at least 1."""
    return max(1, h // 10)


# ---------------------------------------------------------------------------
# Candidate sets and their separation properties
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShatterCandidate:
    """``m`` unit sign-vectors and ``2^m`` scaled Gaussian matrices."""

    x: np.ndarray          # (m, d), entries +-1/sqrt(d)
    matrices: np.ndarray   # (2^m, h, d), N(0,1)/sqrt(h)
    h: int
    m: int

    def __post_init__(self):
        self.x.setflags(write=False)
        self.matrices.setflags(write=False)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_matrices(self) -> int:
        return self.matrices.shape[0]

    def images(self) -> np.ndarray:
        """All hidden images ``A^s x^i`` as an ``(2^m, m, h)`` array."""
        return np.einsum("shd,md->smh", self.matrices, self.x)


def estimate_candidate_bytes(d: int, h: int, m: int) -> int:
    return (1 << m) * h * d * 8


def sample_candidate(d: int, h: int, rng: np.random.Generator) -> ShatterCandidate:
    if not 1 <= d <= h:
        raise DimensionMismatch(f"need h >= d >= 1, got d={d}, h={h}")
    m = sample_count(h)
    if m > FEASIBLE_M:
        raise InfeasibleInstance(
            f"h={h} needs {1 << m} matrices "
            f"(~{estimate_candidate_bytes(d, h, m) / 1e9:.1f} GB); "
            f"cap is m={FEASIBLE_M}")
    signs = rng.integers(0, 2, size=(m, d)) * 2 - 1
    x = signs / math.sqrt(d)
    matrices = rng.standard_normal((1 << m, h, d)) / math.sqrt(h)
    return ShatterCandidate(x, matrices, h, m)


@dataclass(frozen=True)
class SeparationReport:
    """Exhaustive check of the three separated-set properties."""

    max_frobenius_sq: float
    min_pair_dist_sq: float
    pass_count: bool
    pass_frobenius: bool
    pass_separation: bool

    @property
    def passed(self) -> bool:
        return self.pass_count and self.pass_frobenius and self.pass_separation

    def to_jsonable(self) -> dict:
        return {"max_frobenius_sq": self.max_frobenius_sq,
                "min_pair_dist_sq": self.min_pair_dist_sq,
                "pass_count": self.pass_count,
                "pass_frobenius": self.pass_frobenius,
                "pass_separation": self.pass_separation,
                "passed": self.passed}


def check_separation(c: ShatterCandidate) -> SeparationReport:
    """Frobenius budget and pairwise distances over all ``m 2^m`` images."""
    d = c.d
    frob = np.einsum("shd,shd->s", c.matrices, c.matrices)
    max_frob = float(np.max(frob))
    pts = c.images().reshape(-1, c.h)
    sq = np.sum(pts * pts, axis=1)
    dist_sq = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.fill_diagonal(dist_sq, np.inf)
    min_dist = float(np.min(dist_sq))
    return SeparationReport(
        max_frobenius_sq=max_frob,
        min_pair_dist_sq=min_dist,
        pass_count=c.n_matrices == (1 << c.m) and c.m == sample_count(c.h),
        pass_frobenius=max_frob <= 2.0 * d,
        pass_separation=min_dist >= SEPARATION_SQ)


# ---------------------------------------------------------------------------
# Max-formula Lipschitz extension
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzExtension:
    """Interpolates labels on separated nodes with the least slope.

    ``f(u) = C + max_k (y_k - C - 2 M ||u - node_k||)`` where ``C`` centers
    the labels (midrange), ``alpha`` is the smallest pairwise node distance
    and ``M = max_k |y_k - C| / alpha``.  The formula returns each label
    exactly at its node and is ``2M``-Lipschitz everywhere (a max of
    ``2M``-Lipschitz functions).
    """

    nodes: np.ndarray    # (n, h)
    labels: np.ndarray   # (n,)
    center: float
    slope: float
    alpha: float

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def lipschitz(self) -> float:
        return 2.0 * self.slope

    def eval(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.nodes.shape[1],):
            raise DimensionMismatch(
                f"point has shape {u.shape}, nodes live in R^{self.nodes.shape[1]}")
        dists = np.linalg.norm(self.nodes - u, axis=1)
        return self.center + float(
            np.max(self.labels - self.center - self.lipschitz * dists))

    def eval_many(self, us: np.ndarray) -> np.ndarray:
        us = np.asarray(us, dtype=np.float64)
        diff = us[:, None, :] - self.nodes[None, :, :]
        dists = np.linalg.norm(diff, axis=2)
        return self.center + np.max(
            self.labels[None, :] - self.center - self.lipschitz * dists, axis=1)

    def to_jsonable(self) -> dict:
        return {"nodes": self.nodes.tolist(), "labels": self.labels.tolist(),
                "center": self.center, "slope": self.slope,
                "alpha": self.alpha, "lipschitz": self.lipschitz}


def build_extension(nodes: np.ndarray, labels: np.ndarray) -> LipschitzExtension:
    nodes = np.array(nodes, dtype=np.float64)
    labels = np.array(labels, dtype=np.float64)
    if nodes.ndim != 2 or labels.shape != (nodes.shape[0],):
        raise DimensionMismatch("need (n, h) nodes and n labels")
    n = nodes.shape[0]
    if n < 1:
        raise DimensionMismatch("need at least one node")
    center = (float(np.max(labels)) + float(np.min(labels))) / 2.0
    if n == 1:
        return LipschitzExtension(nodes, labels, center, 0.0, math.inf)
    sq = np.sum(nodes * nodes, axis=1)
    dist_sq = sq[:, None] + sq[None, :] - 2.0 * (nodes @ nodes.T)
    np.fill_diagonal(dist_sq, np.inf)
    alpha = math.sqrt(max(float(np.min(dist_sq)), 0.0))
    if alpha == 0.0:
        raise InfeasibleInstance("two nodes coincide; no Lipschitz interpolant")
    maxdev = float(np.max(np.abs(labels - center)))
    return LipschitzExtension(nodes, labels, center, maxdev / alpha, alpha)


def eval_extension(e: LipschitzExtension, u: np.ndarray) -> float:
    return e.eval(u)


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    bound: float
    n_pairs: int
    passed: bool

    def to_jsonable(self) -> dict:
        return {"max_ratio": self.max_ratio, "bound": self.bound,
                "n_pairs": self.n_pairs, "passed": self.passed}


def verify_lipschitz(e: LipschitzExtension, n_random_pairs: int,
                     rng: np.random.Generator) -> LipschitzReport:
    """Difference quotients over all node pairs plus random Gaussian pairs.

    Coincident pairs contribute nothing (0/0 excluded).  The bound is the
    extension's declared constant plus 1e-9 of slack for rounding.
    """
    if n_random_pairs < 1:
        raise ValueError("n_random_pairs must be at least 1")
    h = e.nodes.shape[1]
    vals = e.eval_many(e.nodes)
    max_ratio = 0.0
    n_pairs = 0
    n = len(vals)
    for i in range(n):
        for j in range(i + 1, n):
            dist = float(np.linalg.norm(e.nodes[i] - e.nodes[j]))
            if dist == 0.0:
                continue
            max_ratio = max(max_ratio, abs(vals[i] - vals[j]) / dist)
            n_pairs += 1
    us = rng.standard_normal((n_random_pairs, h))
    vs = rng.standard_normal((n_random_pairs, h))
    fu = e.eval_many(us)
    fv = e.eval_many(vs)
    dists = np.linalg.norm(us - vs, axis=1)
    ok = dists > 0
    if np.any(ok):
        max_ratio = max(max_ratio,
                        float(np.max(np.abs(fu[ok] - fv[ok]) / dists[ok])))
    n_pairs += int(np.sum(ok))
    bound = e.lipschitz + 1e-9
    max_ratio = float(max_ratio)
    return LipschitzReport(max_ratio, bound, n_pairs, bool(max_ratio <= bound))


# ---------------------------------------------------------------------------
# Full shattering instance
# ---------------------------------------------------------------------------

def subset_table(m: int) -> np.ndarray:
    """Row ``k`` flags membership of each ``i`` in the ``k``-th subset of
    ``[m]``, subsets ordered by the binary value of ``k``."""
    ks = np.arange(1 << m, dtype=np.int64)
    return ((ks[:, None] >> np.arange(m)) & 1).astype(bool)


@dataclass(frozen=True)
class ShatterInstance:
    """A candidate, labels for every (matrix, point) cell, the interpolating
    extension, and the class facts needed for membership checks.

    ``labels[k, i] = +1`` iff ``i`` lies in subset ``k``; thresholds are all
    zero; the output weights of every shattering hypothesis are the first
    standard basis vector of ``R^h``.
    """

    candidate: ShatterCandidate
    extension: LipschitzExtension
    subsets: np.ndarray    # (2^m, m) bool
    labels: np.ndarray     # (2^m, m) +-1
    seed: int
    attempts: int
    separation: SeparationReport

    def __post_init__(self):
        self.subsets.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def thresholds(self) -> np.ndarray:
        return np.zeros(self.candidate.m)

    def output_direction(self) -> np.ndarray:
        e1 = np.zeros(self.candidate.h)
        e1[0] = 1.0
        return e1

    def hypothesis_value(self, k: int, i: int) -> float:
        """``<e1, f(A^k x^i) e1>``: the extension at the hidden image."""
        u = self.candidate.matrices[k] @ self.candidate.x[i]
        return self.extension.eval(u)

    def to_jsonable(self) -> dict:
        return {"x": self.candidate.x.tolist(),
                "matrices": self.candidate.matrices.tolist(),
                "h": self.candidate.h,
                "m": self.candidate.m,
                "subsets": self.subsets.astype(int).tolist(),
                "labels": self.labels.tolist(),
                "extension": self.extension.to_jsonable(),
                "seed": self.seed,
                "attempts": self.attempts,
                "separation": self.separation.to_jsonable(),
                "gaussian_algorithm": GAUSSIAN_ALGORITHM}


def instance_from_jsonable(obj: dict) -> ShatterInstance:
    cand = ShatterCandidate(np.array(obj["x"], dtype=np.float64),
                            np.array(obj["matrices"], dtype=np.float64),
                            int(obj["h"]), int(obj["m"]))
    ext_obj = obj["extension"]
    ext = LipschitzExtension(np.array(ext_obj["nodes"], dtype=np.float64),
                             np.array(ext_obj["labels"], dtype=np.float64),
                             float(ext_obj["center"]), float(ext_obj["slope"]),
                             float(ext_obj["alpha"]))
    sep_obj = obj["separation"]
    sep = SeparationReport(float(sep_obj["max_frobenius_sq"]),
                           float(sep_obj["min_pair_dist_sq"]),
                           bool(sep_obj["pass_count"]),
                           bool(sep_obj["pass_frobenius"]),
                           bool(sep_obj["pass_separation"]))
    return ShatterInstance(cand,
                           ext,
                           np.array(obj["subsets"], dtype=bool),
                           np.array(obj["labels"], dtype=np.float64),
                           int(obj["seed"]), int(obj["attempts"]), sep)


def build_instance(d: int, h: int, seed: int,
                   max_retries: int = 1000) -> ShatterInstance:
    """Retry candidates until the separation check passes, then label and
    interpolate.  A passing check forces node distance at least 1/4, hence
    Lipschitz constant at most ``2 * 1 / (1/4) = 8`` for ``+-1`` labels."""
    if max_retries < 1:
        raise ValueError("max_retries must be at least 1")
    best: SeparationReport | None = None
    for attempt in range(max_retries):
        rng = derive_rng(seed, "shatter-candidate", attempt)
        cand = sample_candidate(d, h, rng)
        report = check_separation(cand)
        if report.passed:
            subsets = subset_table(cand.m)
            labels = np.where(subsets, 1.0, -1.0)
            nodes = cand.images().reshape(-1, h)
            ext = build_extension(nodes, labels.reshape(-1))
            return ShatterInstance(cand, ext, subsets, labels, seed,
                                   attempt + 1, report)
        if best is None or report.min_pair_dist_sq > best.min_pair_dist_sq:
            best = report
    raise InfeasibleInstance(
        f"no separated candidate in {max_retries} attempts at d={d}, h={h}; "
        f"best min pair distance^2 {best.min_pair_dist_sq:.6g} "
        f"(need {SEPARATION_SQ}), max Frobenius^2 {best.max_frobenius_sq:.6g} "
        f"(cap {2 * d})")


@dataclass(frozen=True)
class ShatterReport:
    """Margins of every (matrix, point) cell against its target sign."""

    min_margin: float
    failures: tuple[tuple[int, int], ...]
    n_cells: int
    passed: bool

    def to_jsonable(self) -> dict:
        return {"min_margin": self.min_margin,
                "failures": [list(f) for f in self.failures],
                "n_cells": self.n_cells, "passed": self.passed}


def verify_shatter(inst: ShatterInstance, tol: float = 1e-9) -> ShatterReport:
    """Every subset's hypothesis must clear threshold 0 with margin 1.

    Cell ``(k, i)`` needs value at least ``+1`` when ``i`` is in subset
    ``k`` and at most ``-1`` otherwise; at the nodes the extension
    interpolates, so margins are exactly 1 up to rounding.
    """
    cand = inst.candidate
    pts = cand.images()                    # (2^m, m, h)
    vals = inst.extension.eval_many(pts.reshape(-1, cand.h))
    vals = vals.reshape(cand.n_matrices, cand.m)
    signed = np.where(inst.subsets, vals, -vals)   # margin vs threshold 0
    min_margin = float(np.min(signed))
    bad = np.argwhere(signed < 1.0 - tol)
    failures = tuple((int(k), int(i)) for k, i in bad)
    return ShatterReport(min_margin, failures,
                         cand.n_matrices * cand.m, len(failures) == 0)


def class_membership(inst: ShatterInstance) -> dict:
    """Budget facts pinning the instance inside the two-layer class:
    unit inputs, ``||A^s||_F <= sqrt(2d)``, unit output weights, and the
    extension's Lipschitz constant at most 8."""
    cand = inst.candidate
    frob = np.einsum("shd,shd->s", cand.matrices, cand.matrices)
    x_norms = np.linalg.norm(cand.x, axis=1)
    e1 = inst.output_direction()
    return {
        "B": 1.0,
        "max_input_norm": float(np.max(x_norms)),
        "R": math.sqrt(2.0 * cand.d),
        "max_weight_frobenius": float(np.sqrt(np.max(frob))),
        "r": 1.0,
        "output_norm": float(np.linalg.norm(e1)),
        "lipschitz": inst.extension.lipschitz,
        "lipschitz_cap": 8.0,
        "width": cand.h,
        "patterns_realized": cand.n_matrices,
        "points_shattered": cand.m,
        "within_class": bool(
            np.max(x_norms) <= 1.0 + 1e-12
            and np.max(frob) <= 2.0 * cand.d
            and inst.extension.lipschitz <= 8.0 + 1e-12),
    }
