"""Exact rational scalars.

Every numeric quantity in this package is a rational number; floats
appear only in reporting paths that are explicitly labeled approximate.
gmpy2's mpq is used when importable because pivot-heavy linear algebra
is several times faster with it; the stdlib Fraction is a drop-in
fallback with identical semantics. Both types hash and compare
consistently with each other, so mixing them is safe; constructors
below normalize everything to the active type anyway.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational
from typing import Union

try:  # pragma: no cover - exercised implicitly by the whole suite
    from gmpy2 import mpq as _rat

    HAVE_GMPY2 = True
except ImportError:  # pragma: no cover
    _rat = Fraction
    HAVE_GMPY2 = False

# Accepted by Q(): ints, "p/q" strings, and any Rational.
RatLike = Union[int, str, Rational]
# Annotation alias for exact rationals; both Fraction and mpq satisfy it.
Rat = Rational


def Q(value: RatLike = 0, den: RatLike | None = None) -> Rat:
    """Construct an exact rational from ints, "p/q" strings, or rationals."""
    if den is None:
        return _rat(value)
    return _rat(value) / _rat(den)


ZERO = Q(0)
ONE = Q(1)


def is_rational(value: object) -> bool:
    return isinstance(value, Rational)


def qstr(value: Rat) -> str:
    """Serialize as "p" or "p/q" (lowest terms, q > 0)."""
    num, den = value.numerator, value.denominator
    return str(num) if den == 1 else f"{num}/{den}"


def parse_q(text: RatLike) -> Rat:
    """Parse the serialization format accepted in documents.

    Integers pass through; strings must look like "p" or "p/q" with
    integer parts. Floats are rejected: they do not round-trip.
    """
    if isinstance(text, bool):
        raise ValueError("booleans are not rationals")
    if isinstance(text, int):
        return Q(text)
    if isinstance(text, Rational):
        return Q(text)
    if isinstance(text, str):
        parts = text.strip().split("/")
        if len(parts) == 1:
            return Q(int(parts[0]))
        if len(parts) == 2:
            num, den = int(parts[0]), int(parts[1])
            if den == 0:
                raise ValueError(f"zero denominator in rational string {text!r}")
            return Q(num, den)
    raise ValueError(f"not a rational literal: {text!r}")


def as_fraction(value: Rat) -> Fraction:
    return Fraction(value.numerator, value.denominator)


def exact_sqrt(value: Rat) -> Rat | None:
    """The exact square root when `value` is a perfect rational square,
    else None. Exact arithmetic only."""
    if value < 0:
        return None
    num, den = value.numerator, value.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Q(rn, rd)
    return None


def sqrt_enclosure(value: Rat, rel_width: Rat) -> tuple[Rat, Rat]:
    """Certified rational enclosure [lo, hi] of sqrt(value) with
    hi - lo <= rel_width * hi and lo <= sqrt(value) <= hi exactly.

    Perfect squares return a degenerate interval. Bisection on the
    squared predicate keeps everything rational.
    """
    if value < 0:
        raise ValueError("sqrt of a negative rational")
    if value == 0:
        return ZERO, ZERO
    root = exact_sqrt(value)
    if root is not None:
        return root, root
    # Integer-scaled start: isqrt gives floor of the integer sqrt.
    num, den = value.numerator, value.denominator
    lo = Q(math.isqrt(num), math.isqrt(den) + 1)
    hi = Q(math.isqrt(num) + 1, math.isqrt(den))
    while hi - lo > rel_width * hi:
        mid = (lo + hi) / 2
        if mid * mid <= value:
            lo = mid
        else:
            hi = mid
    return lo, hi
