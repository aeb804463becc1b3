"""Exact Euclidean distance bookkeeping.

Squared distances between rational points are rational, so every
comparison this package needs is done on squared quantities. Odd powers
of a distance are exact rationals whenever the squared distance is a
perfect square (always in one ambient dimension); otherwise a certified
enclosure is produced and the caller picks the side that keeps its
claim conservative.
"""

from __future__ import annotations

from typing import Sequence

from .config import DEFAULT_CONFIG, EngineConfig
from .exactq import Q, Rat, RatLike, ZERO, exact_sqrt, sqrt_enclosure

Point = tuple[Rat, ...]


def as_point(coords: Sequence[RatLike]) -> Point:
    return tuple(Q(c) for c in coords)


def dist2(x: Sequence[RatLike], y: Sequence[RatLike]) -> Rat:
    """Exact squared Euclidean distance."""
    if len(x) != len(y):
        raise ValueError("dist2: dimension mismatch")
    total = ZERO
    for a, b in zip(x, y):
        diff = Q(a) - Q(b)
        total += diff * diff
    return total


def dist_exact(x: Sequence[RatLike], y: Sequence[RatLike]) -> Rat | None:
    """|x - y| when it is rational, else None."""
    return exact_sqrt(dist2(x, y))


def dist_power(
    x: Sequence[RatLike],
    y: Sequence[RatLike],
    k: int,
    side: str = "exact",
    config: EngineConfig = DEFAULT_CONFIG,
) -> Rat:
    """|x - y|**k as an exact rational when possible.

    Even k is always exact. For odd k with an irrational distance the
    result depends on `side`: "lo"/"hi" return the matching end of a
    certified enclosure; "exact" raises. The caller chooses the side so
    that the inequality it is building stays true of the exact value.
    """
    if k < 0:
        raise ValueError("dist_power: negative power")
    sq = dist2(x, y)
    if k % 2 == 0:
        return sq ** (k // 2)
    root = exact_sqrt(sq)
    if root is not None:
        return (sq ** (k // 2)) * root
    if side == "exact":
        raise ValueError("dist_power: irrational distance with odd power and side='exact'")
    lo, hi = sqrt_enclosure(sq, config.bisect_rel_width)
    root_side = lo if side == "lo" else hi
    if side not in ("lo", "hi"):
        raise ValueError(f"dist_power: unknown side {side!r}")
    return (sq ** (k // 2)) * root_side


def compare_scaled(q1: Rat, j1: int, s1: Rat, q2: Rat, j2: int, s2: Rat) -> int:
    """Exact three-way comparison of q1 / d1**j1 versus q2 / d2**j2
    where d_i = sqrt(s_i) > 0 and q_i >= 0.

    Cross-multiplying and squaring keeps everything rational:
    q1/d1^j1 <= q2/d2^j2  iff  q1^2 * s2^j2 <= q2^2 * s1^j1.
    Returns -1, 0, or 1.
    """
    if q1 < 0 or q2 < 0:
        raise ValueError("compare_scaled: magnitudes must be nonnegative")
    if s1 <= 0 or s2 <= 0:
        raise ValueError("compare_scaled: squared distances must be positive")
    left = q1 * q1 * (s2**j2)
    right = q2 * q2 * (s1**j1)
    if left < right:
        return -1
    if left > right:
        return 1
    return 0


def scaled_value(q: Rat, j: int, s: Rat, side: str, config: EngineConfig = DEFAULT_CONFIG) -> Rat:
    """q / d**j with d = sqrt(s): exact when representable, else the
    requested side of a certified enclosure."""
    if j == 0:
        return q
    exact_even = s ** (j // 2)
    if j % 2 == 0:
        return q / exact_even
    root = exact_sqrt(s)
    if root is not None:
        return q / (exact_even * root)
    lo, hi = sqrt_enclosure(s, config.bisect_rel_width)
    if side == "hi":
        # larger value needs the smaller denominator
        return q / (exact_even * lo) if q >= 0 else q / (exact_even * hi)
    if side == "lo":
        return q / (exact_even * hi) if q >= 0 else q / (exact_even * lo)
    raise ValueError(f"scaled_value: unknown side {side!r}")
