"""Exact enumeration over finite outcome spaces.

The central tool enumerates the distribution of the *average* of ``n``
i.i.d. draws from a small finite distribution by walking multiset
compositions with exact multinomial weights.  The number of outcomes is
``C(n + k - 1, k - 1)`` for ``k`` support points, and callers must respect
the hard cap — enumeration refuses rather than grind.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator

from .errors import EnumerationTooLarge

ENUMERATION_CAP = 10_000_000


def count_mean_outcomes(n_support: int, n_draws: int) -> int:
    """Number of multisets of size ``n_draws`` over ``n_support`` categories."""
    return math.comb(n_draws + n_support - 1, n_support - 1)


def check_enumeration_size(n_outcomes: int, cap: int = ENUMERATION_CAP) -> None:
    if n_outcomes > cap:
        raise EnumerationTooLarge(n_outcomes, cap)


def iter_mean_outcomes(single: list[tuple[float, float]], n_draws: int,
                       cap: int = ENUMERATION_CAP) -> Iterator[tuple[float, float]]:
    """Distribution of the mean of ``n_draws`` i.i.d. draws.

    ``single`` lists the one-draw distribution as (probability, value) pairs.
    Yields (probability, mean-of-draws) once per multiset, with multinomial
    weights; probabilities sum to 1 up to floating rounding.
    """
    k = len(single)
    if k == 0:
        raise ValueError("empty outcome list")
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    check_enumeration_size(count_mean_outcomes(k, n_draws), cap)
    probs = [p for p, _ in single]
    values = [v for _, v in single]

    def rec(cat: int, remaining: int, weight: float, total: float):
        if cat == k - 1:
            yield weight * probs[cat] ** remaining, (total + remaining * values[cat]) / n_draws
            return
        for c in range(remaining + 1):
            w = weight * math.comb(remaining, c) * probs[cat] ** c
            yield from rec(cat + 1, remaining - c, w, total + c * values[cat])

    yield from rec(0, n_draws, 1.0, 0.0)


def product_outcomes(spaces: list[list[tuple[float, float]]]
                     ) -> Iterator[tuple[float, tuple[float, ...]]]:
    """Cartesian product of independent finite spaces: (probability, values)."""
    if not spaces:
        yield 1.0, ()
        return

    def rec(i: int, weight: float, acc: tuple[float, ...]):
        if i == len(spaces):
            yield weight, acc
            return
        for p, v in spaces[i]:
            yield from rec(i + 1, weight * p, acc + (v,))

    yield from rec(0, 1.0, ())


def exact_moments(outcomes: Iterable[tuple[float, float]]
                  ) -> tuple[float, float, float, int]:
    """(total probability, mean, variance) of a finite distribution.

    Returns ``(prob_total, mean, variance, n_outcomes)`` using exact
    summation to keep the reduction order-independent.
    """
    ps: list[float] = []
    pv: list[float] = []
    pv2: list[float] = []
    for p, v in outcomes:
        ps.append(p)
        pv.append(p * v)
        pv2.append(p * v * v)
    total = math.fsum(ps)
    mean = math.fsum(pv)
    var = math.fsum(pv2) - mean * mean
    return total, mean, max(var, 0.0), len(ps)
