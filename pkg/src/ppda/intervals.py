"""Certified rational brackets of probabilities, with dyadic outward rounding."""

import math
from fractions import Fraction
from typing import NamedTuple

from .constants import DYADIC_BITS
from .runlog import fraction_text


def round_down(x: Fraction, bits: int = DYADIC_BITS) -> Fraction:
    """Largest multiple of 2^-bits not above x."""
    x = Fraction(x)
    if x.denominator <= 1 << bits and (1 << bits) % x.denominator == 0:
        return x
    return Fraction(math.floor(x * (1 << bits)), 1 << bits)


def round_up(x: Fraction, bits: int = DYADIC_BITS) -> Fraction:
    x = Fraction(x)
    if x.denominator <= 1 << bits and (1 << bits) % x.denominator == 0:
        return x
    return Fraction(math.ceil(x * (1 << bits)), 1 << bits)


def clamp(x: Fraction) -> Fraction:
    return min(Fraction(1), max(Fraction(0), x))


class Interval(NamedTuple):
    lo: Fraction
    hi: Fraction

    @classmethod
    def point(cls, x) -> "Interval":
        return cls(Fraction(x), Fraction(x))

    @classmethod
    def unit(cls) -> "Interval":
        return cls(Fraction(0), Fraction(1))

    @classmethod
    def checked(cls, lo, hi) -> "Interval":
        lo, hi = Fraction(lo), Fraction(hi)
        if not 0 <= lo <= hi <= 1:
            raise ValueError(f"not a probability bracket: [{lo}, {hi}]")
        return cls(lo, hi)

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def add(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def mul(self, other: "Interval") -> "Interval":
        # both operands are nonnegative
        return Interval(self.lo * other.lo, self.hi * other.hi)

    def scale(self, c: Fraction) -> "Interval":
        return Interval(self.lo * c, self.hi * c)

    def clamped(self) -> "Interval":
        return Interval(clamp(self.lo), clamp(self.hi))

    def complement(self) -> "Interval":
        return Interval(1 - self.hi, 1 - self.lo)

    def intersect(self, other: "Interval") -> "Interval":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            raise ValueError(f"disjoint brackets {self} and {other}")
        return Interval(lo, hi)

    def divide(self, other: "Interval") -> "Interval":
        """Quotient of nonnegative brackets; the divisor must be bounded away from 0."""
        if other.lo <= 0:
            raise ZeroDivisionError(f"divisor bracket {other} touches 0")
        return Interval(self.lo / other.hi, self.hi / other.lo)

    def rounded(self, bits: int = DYADIC_BITS) -> "Interval":
        return Interval(round_down(self.lo, bits), round_up(self.hi, bits))

    def to_json(self):
        return [fraction_text(self.lo), fraction_text(self.hi)]

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"
