"""Two-layer network hypothesis class: parameters, evaluation, validation.

A hypothesis is ``x -> <v, sigma(W x)>`` where ``W`` is a ``T x d`` hidden
weight matrix, ``v`` the output weight vector, and ``sigma`` an element-wise
Lipschitz activation.  The class is centered at fixed initial weights
``(W0, v0)`` with Frobenius budget ``R`` on ``W - W0`` and Euclidean budget
``r`` on ``v - v0``; inputs are norm-bounded by ``B``.  All logarithms in
this package are base 2, and ``ceil_log2_plus`` clamps at zero for
arguments below one.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .jsonio import dumps


def _frozen_array(a, shape=None, name: str = "array") -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True, order="C")
    if shape is not None and arr.shape != shape:
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def ceil_log2_plus(x: float) -> int:
    """max(0, ceil(log2(x))); 0 for x <= 1 (and for x <= 0 by convention)."""
    if x <= 1.0:
        return 0
    return max(0, math.ceil(math.log2(x)))


def ceil_log2_int(n: int) -> int:
    """ceil(log2(n)) for a positive integer, computed exactly."""
    if n < 1:
        raise ValueError("n must be positive")
    return (n - 1).bit_length()


@dataclass(frozen=True)
class Activation:
    """Element-wise activation with declared Lipschitz constant and value at 0.

    ``fn`` must accept numpy arrays (or scalars) and apply element-wise.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lipschitz: float
    value_at_zero: float

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be non-negative")

    def __call__(self, a):
        return self.fn(np.asarray(a, dtype=np.float64))


def identity() -> Activation:
    return Activation("identity", lambda a: a, 1.0, 0.0)


def scaled_identity(c: float) -> Activation:
    return Activation(f"scaled_identity({c:g})", lambda a: c * a, abs(c), 0.0)


def relu() -> Activation:
    return Activation("relu", lambda a: np.maximum(a, 0.0), 1.0, 0.0)


def tanh() -> Activation:
    return Activation("tanh", np.tanh, 1.0, 0.0)


_BUILTIN_ACTIVATIONS: dict[str, Callable[[], Activation]] = {
    "identity": identity,
    "relu": relu,
    "tanh": tanh,
}


def activation_by_name(name: str) -> Activation:
    if name in _BUILTIN_ACTIVATIONS:
        return _BUILTIN_ACTIVATIONS[name]()
    if name.startswith("scaled_identity:"):
        return scaled_identity(float(name.split(":", 1)[1]))
    raise ValueError(f"unknown activation '{name}'")


@dataclass(frozen=True)
class HypoParams:
    """Class-level constants: sizes, norm budgets, and initial weights."""

    T: int
    d: int
    L: float
    B: float
    R: float
    r: float
    W0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        if self.T < 1 or self.d < 1:
            raise ValueError("T and d must be positive")
        for nm in ("L", "B", "R", "r"):
            if getattr(self, nm) < 0:
                raise ValueError(f"{nm} must be non-negative")
        object.__setattr__(self, "W0", _frozen_array(self.W0, (self.T, self.d), "W0"))
        object.__setattr__(self, "v0", _frozen_array(self.v0, (self.T,), "v0"))

    @staticmethod
    def zero_centered(T: int, d: int, L: float, B: float, R: float, r: float) -> "HypoParams":
        return HypoParams(T, d, L, B, R, r, np.zeros((T, d)), np.zeros(T))

    def to_jsonable(self) -> dict:
        return {
            "T": self.T, "d": self.d, "L": self.L, "B": self.B,
            "R": self.R, "r": self.r,
            "W0": self.W0, "v0": self.v0,
        }

    @staticmethod
    def from_jsonable(obj: dict) -> "HypoParams":
        return HypoParams(
            int(obj["T"]), int(obj["d"]), float(obj["L"]), float(obj["B"]),
            float(obj["R"]), float(obj["r"]), np.asarray(obj["W0"]), np.asarray(obj["v0"]),
        )


@dataclass(frozen=True)
class Hypothesis:
    """Concrete weights (W, v) of one two-layer network."""

    W: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        W = _frozen_array(self.W, name="W")
        if W.ndim != 2:
            raise DimensionMismatch(f"W must be 2-D, got shape {W.shape}")
        v = _frozen_array(self.v, (W.shape[0],), "v")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "v", v)

    @property
    def T(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def row(self, j: int) -> np.ndarray:
        return self.W[j]

    def to_jsonable(self) -> dict:
        return {"W": self.W, "v": self.v}

    @staticmethod
    def from_jsonable(obj: dict) -> "Hypothesis":
        return Hypothesis(np.asarray(obj["W"]), np.asarray(obj["v"]))


@dataclass(frozen=True)
class SampleSet:
    """Fixed set of m input points (rows), each of dimension d."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(self.points, name="points")
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DimensionMismatch("points must be a non-empty 2-D array (m x d)")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, i: int) -> np.ndarray:
        return self.points[i]

    def max_norm(self) -> float:
        return float(np.sqrt((self.points ** 2).sum(axis=1).max()))

    def check_norm_bound(self, B: float) -> None:
        worst = self.max_norm()
        if worst > B + 1e-12:
            raise ValueError(f"sample point norm {worst:.6g} exceeds bound B={B:.6g}")

    def to_jsonable(self) -> dict:
        return {"points": self.points}

    @staticmethod
    def from_jsonable(obj: dict) -> "SampleSet":
        return SampleSet(np.asarray(obj["points"]))


@dataclass(frozen=True)
class EstimatorContract:
    """Declared guarantees of a randomized unbiased estimator.

    ``variance_bound`` bounds the variance of the estimate in every
    direction; for the scalar estimators in this package the direction
    vector degenerates to a sign, so it is simply a variance bound.
    ``expected_bits_bound`` bounds the expected encoded length in symbols.
    """

    mean_target: float
    variance_bound: float
    expected_bits_bound: float


@dataclass(frozen=True)
class ValidityReport:
    frobenius_dist: float
    output_dist: float
    within_R: bool
    within_r: bool

    @property
    def valid(self) -> bool:
        return self.within_R and self.within_r


def eval_network(h: Hypothesis, x: np.ndarray, act: Activation) -> float:
    """<v, sigma(W x)> with the output sum accumulated in ascending j."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (h.d,):
        raise DimensionMismatch(f"input has shape {x.shape}, expected ({h.d},)")
    hidden = act(h.W @ x)
    total = 0.0
    for j in range(h.T):
        total += h.v[j] * hidden[j]
    return float(total)


def validate(h: Hypothesis, p: HypoParams) -> ValidityReport:
    """Distances from the initialization and membership in the norm balls."""
    if h.W.shape != (p.T, p.d):
        raise DimensionMismatch(f"W has shape {h.W.shape}, expected ({p.T}, {p.d})")
    dW = float(np.linalg.norm(h.W - p.W0))
    dv = float(np.linalg.norm(h.v - p.v0))
    return ValidityReport(
        frobenius_dist=dW,
        output_dist=dv,
        within_R=bool(dW <= p.R + 1e-12),
        within_r=bool(dv <= p.r + 1e-12),
    )


def append_bias(points: np.ndarray, value: float = 1.0) -> np.ndarray:
    """Append a constant coordinate, the usual reduction absorbing biases."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        return np.concatenate([pts, [value]])
    col = np.full((pts.shape[0], 1), value)
    return np.hstack([pts, col])


def to_json(obj: HypoParams | Hypothesis | SampleSet) -> str:
    return dumps(obj.to_jsonable())


def hypothesis_from_json(s: str) -> Hypothesis:
    return Hypothesis.from_jsonable(json.loads(s))


def params_from_json(s: str) -> HypoParams:
    return HypoParams.from_jsonable(json.loads(s))


def sample_set_from_json(s: str) -> SampleSet:
    return SampleSet.from_jsonable(json.loads(s))


def derive_rng(seed: int, *key: int | str) -> np.random.Generator:
    """Deterministic child stream for (seed, key...) — disjoint across keys.

    String key parts are folded in through crc32 so call sites can label
    streams readably without risking collisions between numeric indices.
    """
    parts = [int(seed)]
    for k in key:
        parts.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.default_rng(np.random.SeedSequence(parts))
