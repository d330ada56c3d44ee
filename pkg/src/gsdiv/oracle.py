"""Exact rational reference quotients and the correct-rounding margin check."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .fixedpoint import FixedPoint


def _as_fraction(x) -> Fraction:
    if isinstance(x, FixedPoint):
        return x.value
    return Fraction(x)


@dataclass(frozen=True)
class ExactQuotient:
    value: Fraction
    target_mantissa_bits: int

    @property
    def margin(self) -> Fraction:
        return Fraction(1, 1 << (self.target_mantissa_bits + 1))

    def error_of(self, approx) -> Fraction:
        return _as_fraction(approx) - self.value

    def error_in_ulp(self, approx, ulp) -> Fraction:
        return self.error_of(approx) / Fraction(ulp)

    def within_margin(self, approx) -> bool:
        return abs(self.error_of(approx)) < self.margin


def exact_quotient(a, b, target_mantissa_bits: int = 52) -> ExactQuotient:
    b = _as_fraction(b)
    if b == 0:
        raise ZeroDivisionError("divisor is zero")
    return ExactQuotient(_as_fraction(a) / b, target_mantissa_bits)


def check_margin(approx, exact, mantissa_bits: int, ulp=None) -> tuple[bool, Fraction]:
    """Whether ``|approx - exact| < 2**-(mantissa_bits+1)``, plus the signed error.

    The error is returned in units of ``ulp`` when given, else absolute. The
    comparison is strict: an error equal to the margin can round either way.
    """
    err = _as_fraction(approx) - _as_fraction(exact)
    ok = abs(err) < Fraction(1, 1 << (mantissa_bits + 1))
    return ok, err if ulp is None else err / Fraction(ulp)


def margin_ok_int(n_sig: int, n_frac: int, a_sig: int, b_sig: int, w: int, mantissa_bits: int) -> bool:
    """Integer-only form of :func:`check_margin` for ``N = n_sig/2**n_frac``, ``a/b`` on a ``2**-w`` grid.

    ``|N - a/b| < 2**-(m+1)``  <=>  ``|n_sig*b - a*2**n_frac| * 2**(m+1) < b * 2**n_frac``.
    """
    diff = abs(n_sig * b_sig - (a_sig << n_frac))
    return (diff << (mantissa_bits + 1)) < (b_sig << n_frac)


def scaled_error(n_sig: int, n_frac: int, a_sig: int, b_sig: int) -> Fraction:
    """``N - a/b`` in ulps of ``N`` (the operands' common scale cancels)."""
    return Fraction(n_sig * b_sig - (a_sig << n_frac), b_sig)
