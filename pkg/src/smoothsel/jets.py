"""Exact algebra of (m-1)-jets on R^n.

A jet is the Taylor data of a smooth function at a point: the vector of
partial derivatives d^alpha P(base) over all multiindices alpha of order
at most m-1. Storing derivative values rather than monomial coefficients
matches the inequalities this package verifies verbatim and avoids
factorial conversions inside constraint rows.

The module also carries the two order relations everything downstream
leans on: a total order on multiindices (compare partial-sum vectors at
the largest index where they differ) and the induced total order on
subsets of the index set M (decided by the least element of the
symmetric difference), under which M is minimal and the empty set
maximal. Monotonic subsets (closed under adding any multiindex that
stays within degree bounds) index the descent that makes the recursive
constructions terminate; label_depth is the numeric depth assigned to a
monotonic set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb, factorial
from typing import Iterable, Mapping, Sequence

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import PreconditionError, SizeBudgetError
from .exactq import ONE, Q, Rat, RatLike, ZERO

MultiIndex = tuple[int, ...]
Point = tuple[Rat, ...]


def mi_order(alpha: MultiIndex) -> int:
    return sum(alpha)


def mi_add(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex:
    return tuple(a + b for a, b in zip(alpha, beta))


def mi_sub(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex | None:
    """alpha - beta componentwise, or None if any component goes negative."""
    out = tuple(a - b for a, b in zip(alpha, beta))
    return out if all(c >= 0 for c in out) else None


def mi_factorial(alpha: MultiIndex) -> int:
    out = 1
    for a in alpha:
        out *= factorial(a)
    return out


def mi_binomial(alpha: MultiIndex, beta: MultiIndex) -> int:
    """Product of componentwise binomial coefficients; 0 unless beta <= alpha."""
    out = 1
    for a, b in zip(alpha, beta):
        if b > a:
            return 0
        out *= comb(a, b)
    return out


def multiindex_key(alpha: MultiIndex):
    """Sort key realizing the total order: partial sums read from the
    full sum backwards, so the first differing position is the largest k
    with different partial sums."""
    sums, run = [], 0
    for a in alpha:
        run += a
        sums.append(run)
    return tuple(reversed(sums))


def multiindex_less(alpha: MultiIndex, beta: MultiIndex) -> bool:
    """Strict total order on multiindices of a fixed n.

    At the largest k where the partial sums a_1+...+a_k differ, alpha is
    smaller iff its partial sum is smaller. Rejects equal arguments: the
    order is strict.
    """
    if len(alpha) != len(beta):
        raise PreconditionError("multiindex_less: different ambient dimensions")
    if alpha == beta:
        raise PreconditionError("multiindex_less: arguments are equal")
    return multiindex_key(alpha) < multiindex_key(beta)


def multiindex_leq(alpha: MultiIndex, beta: MultiIndex) -> bool:
    return alpha == beta or multiindex_less(alpha, beta)


@lru_cache(maxsize=None)
def enumerate_multiindices(m: int, n: int) -> tuple[MultiIndex, ...]:
    """All multiindices of order <= m-1 in n variables, sorted by the
    total order. Length is binomial(n+m-1, n)."""
    if m < 1 or n < 1:
        raise PreconditionError("enumerate_multiindices: need m >= 1 and n >= 1")

    def gen(dim: int, budget: int):
        if dim == 0:
            yield ()
            return
        for head in range(budget + 1):
            for tail in gen(dim - 1, budget - head):
                yield (head, *tail)

    out = sorted(gen(n, m - 1), key=multiindex_key)
    assert len(out) == comb(n + m - 1, n)
    return tuple(out)


def subset_less(A: Iterable[MultiIndex], B: Iterable[MultiIndex]) -> bool:
    """Strict total order on subsets of M: the least multiindex in the
    symmetric difference decides, in favor of the set containing it.
    M is minimal and the empty set maximal. Rejects equal arguments."""
    sa, sb = frozenset(A), frozenset(B)
    if sa == sb:
        raise PreconditionError("subset_less: arguments are equal")
    gamma = min(sa ^ sb, key=multiindex_key)
    return gamma in sa


def subset_leq(A: Iterable[MultiIndex], B: Iterable[MultiIndex]) -> bool:
    sa, sb = frozenset(A), frozenset(B)
    return sa == sb or subset_less(sa, sb)


@dataclass(frozen=True)
class JetSpace:
    """The space of (m-1)-jets in n variables: polynomials of degree
    at most m-1 identified with their derivative data."""

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise PreconditionError("JetSpace: need m >= 1 and n >= 1")

    @cached_property
    def indices(self) -> tuple[MultiIndex, ...]:
        return enumerate_multiindices(self.m, self.n)

    @cached_property
    def dim(self) -> int:
        return len(self.indices)

    @cached_property
    def position(self) -> dict[MultiIndex, int]:
        return {alpha: i for i, alpha in enumerate(self.indices)}

    def index_set(self) -> frozenset[MultiIndex]:
        return frozenset(self.indices)


def is_monotonic(A: Iterable[MultiIndex], space: JetSpace) -> bool:
    """True iff A is closed under adding any gamma in M that keeps the
    sum inside M."""
    members = frozenset(A)
    index_set = space.index_set()
    if not members <= index_set:
        raise PreconditionError("is_monotonic: A must be a subset of the index set")
    for alpha in members:
        for gamma in space.indices:
            total = mi_add(alpha, gamma)
            if total in index_set and total not in members:
                return False
    return True


def monotonic_span(members: Iterable[MultiIndex], space: JetSpace) -> frozenset[MultiIndex]:
    """Smallest monotonic superset: all alpha + gamma landing inside M.
    The result is <= the input under subset_less (adding elements only
    helps in the symmetric-difference comparison)."""
    base = frozenset(members)
    if not base <= space.index_set():
        raise PreconditionError("monotonic_span: input must be a subset of the index set")
    out = {
        total
        for alpha in base
        for gamma in space.indices
        if (total := mi_add(alpha, gamma)) in space.index_set()
    }
    return frozenset(out)


@lru_cache(maxsize=None)
def _monotonic_subsets(m: int, n: int) -> tuple[frozenset[MultiIndex], ...]:
    space = JetSpace(m, n)
    out = []
    for size in range(space.dim + 1):
        for combo in itertools.combinations(space.indices, size):
            if is_monotonic(combo, space):
                out.append(frozenset(combo))
    return tuple(out)


def monotonic_subsets(space: JetSpace, config: EngineConfig = DEFAULT_CONFIG) -> tuple[frozenset[MultiIndex], ...]:
    """All monotonic subsets of M, by exhaustive enumeration."""
    if space.dim > config.label_depth_dim_cap:
        raise SizeBudgetError(
            f"subset enumeration rejected: jet dimension {space.dim} exceeds "
            f"cap {config.label_depth_dim_cap}"
        )
    return _monotonic_subsets(space.m, space.n)


def label_depth(A: Iterable[MultiIndex], space: JetSpace, config: EngineConfig = DEFAULT_CONFIG) -> int:
    """Depth 1 + 3 * #(monotonic sets strictly below A). Relevant
    property: descending one step in the subset order lowers the depth
    by at least 3."""
    members = frozenset(A)
    if not is_monotonic(members, space):
        raise PreconditionError("label_depth: A must be monotonic")
    below = sum(
        1
        for cand in monotonic_subsets(space, config)
        if cand != members and subset_less(cand, members)
    )
    return 1 + 3 * below


@dataclass(frozen=True)
class MonotonicSet:
    """A monotonic subset of a jet space's index set; validated at
    construction."""

    space: JetSpace
    members: frozenset[MultiIndex]

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", frozenset(self.members))
        if not is_monotonic(self.members, self.space):
            raise PreconditionError("MonotonicSet: members are not monotonic")

    def depth(self, config: EngineConfig = DEFAULT_CONFIG) -> int:
        return label_depth(self.members, self.space, config)

    def __contains__(self, alpha: MultiIndex) -> bool:
        return alpha in self.members

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Jet:
    """Derivative data of a polynomial of degree <= m-1 at a base point.

    coeffs[i] is d^alpha P(base) for alpha = space.indices[i]. Jets at a
    common base form a vector space; multiplication truncates.
    """

    space: JetSpace
    base: Point
    coeffs: tuple[Rat, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "base", tuple(Q(b) for b in self.base))
        object.__setattr__(self, "coeffs", tuple(Q(c) for c in self.coeffs))
        if len(self.base) != self.space.n:
            raise PreconditionError("Jet: base point dimension mismatch")
        if len(self.coeffs) != self.space.dim:
            raise PreconditionError("Jet: coefficient count mismatch")

    @classmethod
    def zero(cls, space: JetSpace, base: Sequence[RatLike]) -> "Jet":
        return cls(space, tuple(Q(b) for b in base), (ZERO,) * space.dim)

    @classmethod
    def from_map(
        cls, space: JetSpace, base: Sequence[RatLike], values: Mapping[MultiIndex, RatLike]
    ) -> "Jet":
        unknown = set(values) - space.index_set()
        if unknown:
            raise PreconditionError(f"Jet.from_map: indices outside the space: {sorted(unknown)}")
        coeffs = tuple(Q(values.get(alpha, 0)) for alpha in space.indices)
        return cls(space, tuple(Q(b) for b in base), coeffs)

    def coeff(self, alpha: MultiIndex) -> Rat:
        return self.coeffs[self.space.position[alpha]]

    def __add__(self, other: "Jet") -> "Jet":
        self._check_peer(other)
        return Jet(self.space, self.base, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "Jet") -> "Jet":
        self._check_peer(other)
        return Jet(self.space, self.base, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "Jet":
        return Jet(self.space, self.base, tuple(-c for c in self.coeffs))

    def scale(self, factor: RatLike) -> "Jet":
        f = Q(factor)
        return Jet(self.space, self.base, tuple(f * c for c in self.coeffs))

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def _check_peer(self, other: "Jet") -> None:
        if self.space != other.space or self.base != other.base:
            raise PreconditionError("jet arithmetic requires a common space and base")


def eval_jet_derivative(P: Jet, beta: MultiIndex, y: Sequence[RatLike]) -> Rat:
    """Exact value of d^beta P at y via the finite Taylor sum around the
    base. Orders up to m-1 read the polynomial; order exactly m returns
    0 (degree bound); beyond m is rejected."""
    if len(beta) != P.space.n:
        raise PreconditionError("eval_jet_derivative: beta dimension mismatch")
    order = mi_order(beta)
    if order > P.space.m:
        raise PreconditionError(f"eval_jet_derivative: order {order} exceeds m = {P.space.m}")
    if order >= P.space.m:
        return ZERO
    point = tuple(Q(c) for c in y)
    offset = tuple(p - b for p, b in zip(point, P.base))
    total = ZERO
    for alpha in P.space.indices:
        gamma = mi_sub(alpha, beta)
        if gamma is None:
            continue
        term = P.coeff(alpha)
        if term == 0:
            continue
        for off, g in zip(offset, gamma):
            if g:
                term *= off**g
        total += term / mi_factorial(gamma)
    return total


def eval_jet(P: Jet, y: Sequence[RatLike]) -> Rat:
    return eval_jet_derivative(P, (0,) * P.space.n, y)


def recenter_jet(P: Jet, y: Sequence[RatLike]) -> Jet:
    """The same polynomial described by its derivatives at y. Linear,
    invertible, exact; recentering back is the identity."""
    point = tuple(Q(c) for c in y)
    return Jet(P.space, point, tuple(eval_jet_derivative(P, beta, point) for beta in P.space.indices))


def recenter_matrix(space: JetSpace, src: Point, dst: Point) -> list[list[Rat]]:
    """Matrix R with (R v)_beta = d^beta P(dst) when v holds the
    derivatives of P at src. Row and column order follow space.indices."""
    offset = tuple(Q(d) - Q(s) for d, s in zip(dst, src))
    rows: list[list[Rat]] = []
    for beta in space.indices:
        row = [ZERO] * space.dim
        for j, alpha in enumerate(space.indices):
            gamma = mi_sub(alpha, beta)
            if gamma is None:
                continue
            term = ONE
            for off, g in zip(offset, gamma):
                if g:
                    term *= off**g
            row[j] = term / mi_factorial(gamma)
        rows.append(row)
    return rows


def jet_multiply(P: Jet, Qj: Jet, x: Sequence[RatLike] | None = None) -> Jet:
    """Truncated product at the common base: Leibniz on derivative data,
    dropping everything beyond degree m-1."""
    if x is not None:
        point = tuple(Q(c) for c in x)
        if P.base != point or Qj.base != point:
            raise PreconditionError("jet_multiply: jets must be recentered at x")
    elif P.base != Qj.base:
        raise PreconditionError("jet_multiply: jets must share a base point")
    if P.space != Qj.space:
        raise PreconditionError("jet_multiply: jets must share a space")
    space = P.space
    coeffs = []
    for alpha in space.indices:
        total = ZERO
        for beta in space.indices:
            gamma = mi_sub(alpha, beta)
            if gamma is None:
                continue
            weight = mi_binomial(alpha, beta)
            total += weight * P.coeff(beta) * Qj.coeff(gamma)
        coeffs.append(total)
    return Jet(space, P.base, tuple(coeffs))


def jet_one(space: JetSpace, base: Sequence[RatLike]) -> Jet:
    return Jet.from_map(space, base, {(0,) * space.n: ONE})


def taylor_monomial(space: JetSpace, base: Sequence[RatLike], omega: MultiIndex, scale: RatLike = 1) -> Jet:
    """Jet of scale * (x - base)^omega: a single derivative entry
    omega! * scale at index omega (when omega lies in M)."""
    if omega not in space.index_set():
        raise PreconditionError("taylor_monomial: omega outside the index set")
    return Jet.from_map(space, base, {omega: Q(scale) * mi_factorial(omega)})


def jet_inverse(P: Jet) -> Jet:
    """Truncated multiplicative inverse; requires P(base) != 0.

    Solves d^alpha(P * R)(base) = [alpha = 0] for R's entries in
    increasing multiindex order.
    """
    c0 = P.coeff((0,) * P.space.n)
    if c0 == 0:
        raise PreconditionError("jet_inverse: constant term is zero")
    space = P.space
    inv: dict[MultiIndex, Rat] = {}
    for alpha in space.indices:
        if mi_order(alpha) == 0:
            inv[alpha] = ONE / c0
            continue
        acc = ZERO
        for beta in space.indices:
            gamma = mi_sub(alpha, beta)
            if gamma is None or gamma == alpha:
                continue
            acc += mi_binomial(alpha, beta) * P.coeff(beta) * inv[gamma]
        inv[alpha] = -acc / c0
    return Jet.from_map(space, P.base, inv)
