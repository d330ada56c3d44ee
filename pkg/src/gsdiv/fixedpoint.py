"""Exact unsigned fixed-point values and the truncating datapath primitives.

Every value is an integer significand scaled by ``2**-frac_bits``. Products
are formed exactly and only lose precision through :func:`truncate`, which
hands back the dropped amount so callers can account for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

Number = Union[int, Fraction, str]


class FixedPointError(ValueError):
    """Raised when an operand violates a width or range precondition."""


@dataclass(frozen=True, slots=True)
class FixedPoint:
    significand: int
    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0:
            raise FixedPointError("bit counts must be non-negative")
        if self.significand < 0:
            raise FixedPointError("FixedPoint is unsigned")
        if self.significand >> (self.int_bits + self.frac_bits):
            raise FixedPointError(
                f"significand {self.significand:#x} does not fit in "
                f"{self.int_bits}.{self.frac_bits} bits"
            )

    @classmethod
    def from_value(cls, value: Number, int_bits: int, frac_bits: int) -> "FixedPoint":
        """Exact conversion; raises if ``value`` is not on the ``2**-frac_bits`` grid."""
        q = Fraction(value)
        scaled = q * (1 << frac_bits)
        if scaled.denominator != 1:
            raise FixedPointError(f"{value} is not representable with {frac_bits} fractional bits")
        return cls(int(scaled), int_bits, frac_bits)

    @property
    def value(self) -> Fraction:
        return Fraction(self.significand, 1 << self.frac_bits)

    @property
    def ulp(self) -> Fraction:
        return Fraction(1, 1 << self.frac_bits)

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    def widen(self, int_bits: int | None = None, frac_bits: int | None = None) -> "FixedPoint":
        """Add integer and/or fractional bits. Never changes the value."""
        ib = self.int_bits if int_bits is None else int_bits
        fb = self.frac_bits if frac_bits is None else frac_bits
        if ib < self.int_bits or fb < self.frac_bits:
            raise FixedPointError("widen cannot remove bits")
        return FixedPoint(self.significand << (fb - self.frac_bits), ib, fb)

    def with_int_bits(self, int_bits: int) -> "FixedPoint":
        # Range check only; the constructor rejects a value that does not fit.
        return FixedPoint(self.significand, int_bits, self.frac_bits)

    def __float__(self) -> float:
        return self.significand / (1 << self.frac_bits)

    def __str__(self) -> str:
        return f"{self.value} ({self.int_bits}.{self.frac_bits})"


@dataclass(frozen=True, slots=True)
class SignedDelta:
    """Sign-magnitude ``F - 1`` fed to the short port of a rectangular multiplier."""

    magnitude: FixedPoint
    negative: bool = False

    @classmethod
    def from_factor(cls, f: FixedPoint) -> "SignedDelta":
        one = 1 << f.frac_bits
        diff = f.significand - one
        return cls(FixedPoint(abs(diff), 1, f.frac_bits), diff < 0)

    @property
    def value(self) -> Fraction:
        v = self.magnitude.value
        return -v if self.negative else v


def mul_exact(a: FixedPoint, b: FixedPoint) -> FixedPoint:
    return FixedPoint(
        a.significand * b.significand,
        a.int_bits + b.int_bits,
        a.frac_bits + b.frac_bits,
    )


def truncate(a: FixedPoint, new_frac_bits: int) -> tuple[FixedPoint, Fraction]:
    """Drop fractional bits toward zero.

    Returns the truncated value and the exact error ``a - result``, which lies
    in ``[0, 2**-new_frac_bits)``.
    """
    if new_frac_bits > a.frac_bits:
        raise FixedPointError(
            f"cannot truncate {a.frac_bits} fractional bits to {new_frac_bits}; use widen"
        )
    if new_frac_bits < 0:
        raise FixedPointError("new_frac_bits must be non-negative")
    drop = a.frac_bits - new_frac_bits
    sig = a.significand >> drop
    rem = a.significand - (sig << drop)
    return FixedPoint(sig, a.int_bits, new_frac_bits), Fraction(rem, 1 << a.frac_bits)


def ones_complement_from_two(d: FixedPoint) -> FixedPoint:
    """``2 - d - ulp`` by inverting every stored bit of a ``1.k`` operand."""
    if d.int_bits != 1:
        raise FixedPointError(f"one's complement needs a 1.k operand, got {d.int_bits} integer bits")
    mask = (1 << (d.frac_bits + 1)) - 1
    return FixedPoint(d.significand ^ mask, 1, d.frac_bits)


def twos_complement_from_two(d: FixedPoint) -> FixedPoint:
    """Exact ``2 - d`` for ``d`` in ``(0, 2)``."""
    if d.int_bits != 1:
        raise FixedPointError(f"two's complement needs a 1.k operand, got {d.int_bits} integer bits")
    if d.significand == 0:
        raise FixedPointError("2 - 0 does not fit in a 1.k result")
    return FixedPoint((2 << d.frac_bits) - d.significand, 1, d.frac_bits)


def rectangular_mul(
    n: FixedPoint, f_reduced: SignedDelta, e: int, out_frac_bits: int
) -> tuple[FixedPoint, Fraction]:
    """``truncate(n + n*(F-1))`` with the short operand ``F-1`` sized by ``e``.

    The multiply-add form lets the multiplier skip the ``e-1`` leading bits of
    ``F`` that are all zeros (or all ones when ``F < 1``). ``|F-1|`` must stay
    below ``2**-(e-1)``; anything larger means the omitted bits were not
    actually redundant.
    """
    if e < 1:
        raise FixedPointError("rectangular multiply needs e >= 1")
    mag = f_reduced.magnitude
    if mag.significand >> max(mag.frac_bits - e + 1, 0):
        raise FixedPointError(
            f"|F-1| = {mag.value} violates the {e}-bit leading pattern (needs < 2^-{e - 1})"
        )
    # Short port: only the low frac_bits-e+1 bits of the magnitude are nonzero.
    partial = n.significand * mag.significand
    full = n.significand << mag.frac_bits
    acc = full - partial if f_reduced.negative else full + partial
    frac = n.frac_bits + mag.frac_bits
    int_bits = n.int_bits + 1
    exact = FixedPoint(acc, int_bits, frac)
    return truncate(exact, out_frac_bits)


def requantize(a: FixedPoint, frac_bits: int) -> tuple[FixedPoint, Fraction]:
    """Truncate to ``frac_bits``, or widen error-free when ``a`` is already coarser."""
    if frac_bits >= a.frac_bits:
        return a.widen(frac_bits=frac_bits), Fraction(0)
    return truncate(a, frac_bits)
