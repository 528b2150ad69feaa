"""Shared exception types."""

from __future__ import annotations


class AdlError(ValueError):
    """Base class for all structured errors raised by this package."""


class DimensionMismatch(AdlError):
    """Operands have incompatible shapes."""


class DecodeError(AdlError):
    """A bit stream could not be decoded.

    Carries the symbol offset and the byte offset into the physical
    (2-bit-per-symbol) stream at which decoding failed.
    """

    def __init__(self, message: str, symbol_offset: int):
        self.symbol_offset = symbol_offset
        self.byte_offset = (symbol_offset * 2) // 8
        super().__init__(
            f"{message} (symbol offset {symbol_offset}, physical byte offset {self.byte_offset})"
        )


class RestrictionError(AdlError):
    """An estimator defined only on the stored sample points was evaluated elsewhere."""


class EnumerationTooLarge(AdlError):
    """Exact enumeration was requested for an outcome space above the size cap."""

    def __init__(self, n_outcomes: int, cap: int):
        self.n_outcomes = n_outcomes
        self.cap = cap
        super().__init__(
            f"exact enumeration refused: outcome space has {n_outcomes} points (cap {cap})"
        )


class InfeasibleInstance(AdlError):
    """A randomized construction could not be completed within its resource budget."""
