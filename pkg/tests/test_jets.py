"""Multiindex orders, monotonic sets, and exact jet arithmetic.

Polynomial identities are checked against sympy as an independent
oracle; order values on small index sets are asserted by hand.
"""

import random

import pytest
import sympy

from smoothsel.errors import PreconditionError
from smoothsel.exactq import Q, as_fraction
from smoothsel.jets import (
    Jet,
    JetSpace,
    enumerate_multiindices,
    eval_jet,
    eval_jet_derivative,
    is_monotonic,
    jet_inverse,
    jet_multiply,
    jet_one,
    label_depth,
    mi_order,
    monotonic_span,
    monotonic_subsets,
    multiindex_less,
    recenter_jet,
    recenter_matrix,
    subset_leq,
    subset_less,
    taylor_monomial,
)


# ---------------------------------------------------------------------------
# Orders


def test_multiindex_order_two_vars():
    assert multiindex_less((0, 1), (1, 0))
    assert multiindex_less((0, 0), (0, 1))
    assert not multiindex_less((1, 0), (0, 1))


def test_multiindex_order_sorts_by_total_degree_first():
    idx = enumerate_multiindices(3, 2)
    assert idx == ((0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0))
    degrees = [mi_order(a) for a in idx]
    assert degrees == sorted(degrees)


def test_subset_order_containment_direction():
    space = JetSpace(2, 1)
    full = frozenset(space.indices)
    a = frozenset({(1,)})
    assert subset_less(full, a)
    assert subset_less(a, frozenset())
    assert subset_leq(full, frozenset())
    with pytest.raises(PreconditionError):
        subset_less(a, a)


def test_adding_an_element_moves_down():
    a = frozenset({(1, 0)})
    assert subset_less(a | {(0, 1)}, a)


def test_monotonic_membership():
    space = JetSpace(2, 1)
    assert is_monotonic(frozenset(), space)
    assert is_monotonic({(1,)}, space)
    assert not is_monotonic({(0,)}, space)
    assert is_monotonic({(0,), (1,)}, space)


def test_monotonic_span_values():
    space = JetSpace(3, 1)
    assert monotonic_span({(1,)}, space) == frozenset({(1,), (2,)})
    assert monotonic_span({(2,)}, space) == frozenset({(2,)})


def test_label_depth_hand_values():
    # m = 2, n = 1: three monotonic sets, shallowest at the full set
    space = JetSpace(2, 1)
    assert len(monotonic_subsets(space)) == 3
    assert label_depth({(0,), (1,)}, space) == 1
    assert label_depth({(1,)}, space) == 4
    assert label_depth(frozenset(), space) == 7


# ---------------------------------------------------------------------------
# Jets against sympy


def sympy_poly(P: Jet, symbols):
    """Reconstruct the polynomial from its derivative data."""
    expr = sympy.Integer(0)
    for alpha in P.space.indices:
        term = sympy.Rational(as_fraction(P.coeff(alpha)))
        for s, b, a in zip(symbols, P.base, alpha):
            term *= (s - sympy.Rational(as_fraction(b))) ** a / sympy.factorial(a)
        expr += term
    return sympy.expand(expr)


def rand_jet(space, rng, base=None):
    b = base if base is not None else tuple(Q(rng.randint(-4, 4), 2) for _ in range(space.n))
    return Jet(space, b, tuple(Q(rng.randint(-12, 12), 4) for _ in range(space.dim)))


@pytest.mark.parametrize("m,n", [(2, 1), (3, 1), (2, 2), (3, 2)])
def test_eval_jet_derivative_matches_sympy(m, n):
    rng = random.Random(100 * m + n)
    space = JetSpace(m, n)
    symbols = sympy.symbols(f"x0:{n}")
    for _ in range(5):
        P = rand_jet(space, rng)
        expr = sympy_poly(P, symbols)
        y = tuple(Q(rng.randint(-6, 6), 3) for _ in range(n))
        subs = {s: sympy.Rational(as_fraction(c)) for s, c in zip(symbols, y)}
        for beta in space.indices:
            d = expr
            for s, b in zip(symbols, beta):
                d = sympy.diff(d, s, b)
            want = sympy.Rational(d.subs(subs))
            got = sympy.Rational(as_fraction(eval_jet_derivative(P, beta, y)))
            assert got == want


def test_derivative_of_order_m_vanishes():
    space = JetSpace(2, 1)
    P = Jet(space, (Q(0),), (Q(3), Q(5)))
    assert eval_jet_derivative(P, (2,), (Q(7),)) == 0
    with pytest.raises(PreconditionError):
        eval_jet_derivative(P, (3,), (Q(0),))


def test_recenter_roundtrip_and_matrix_agree():
    rng = random.Random(9)
    space = JetSpace(3, 2)
    for _ in range(5):
        P = rand_jet(space, rng)
        y = tuple(Q(rng.randint(-4, 4), 2) for _ in range(2))
        moved = recenter_jet(P, y)
        assert recenter_jet(moved, P.base) == P
        R = recenter_matrix(space, P.base, y)
        via_matrix = [
            sum(R[i][j] * P.coeffs[j] for j in range(space.dim))
            for i in range(space.dim)
        ]
        assert tuple(via_matrix) == moved.coeffs


@pytest.mark.parametrize("m,n", [(2, 1), (3, 1), (2, 2)])
def test_jet_multiply_is_truncated_product(m, n):
    rng = random.Random(7 * m + n)
    space = JetSpace(m, n)
    symbols = sympy.symbols(f"x0:{n}")
    for _ in range(4):
        base = tuple(Q(rng.randint(-2, 2), 2) for _ in range(n))
        P = rand_jet(space, rng, base)
        R = rand_jet(space, rng, base)
        prod = jet_multiply(P, R)
        full = sympy.expand(sympy_poly(P, symbols) * sympy_poly(R, symbols))
        subs = {s: sympy.Rational(as_fraction(b)) for s, b in zip(symbols, base)}
        for beta in space.indices:
            d = full
            for s, b in zip(symbols, beta):
                d = sympy.diff(d, s, b)
            assert sympy.Rational(as_fraction(prod.coeff(beta))) == sympy.Rational(
                d.subs(subs)
            )


def test_jet_multiply_associative_and_commutative():
    rng = random.Random(13)
    space = JetSpace(3, 2)
    base = (Q(1, 2), Q(-1, 3))
    A = rand_jet(space, rng, base)
    B = rand_jet(space, rng, base)
    C = rand_jet(space, rng, base)
    assert jet_multiply(A, B) == jet_multiply(B, A)
    assert jet_multiply(jet_multiply(A, B), C) == jet_multiply(A, jet_multiply(B, C))


def test_taylor_monomial_and_eval():
    space = JetSpace(3, 2)
    base = (Q(1), Q(2))
    S = taylor_monomial(space, base, (1, 1), Q(3))
    # 3 (x - 1)(y - 2) at (2, 4) is 6
    assert eval_jet(S, (Q(2), Q(4))) == 6
    assert S.coeff((1, 1)) == 3  # omega! * scale


def test_jet_inverse_is_exact():
    rng = random.Random(17)
    space = JetSpace(3, 2)
    base = (Q(0), Q(0))
    one = jet_one(space, base)
    for _ in range(5):
        P = rand_jet(space, rng, base)
        if P.coeff((0, 0)) == 0:
            continue
        assert jet_multiply(P, jet_inverse(P)) == one
    with pytest.raises(PreconditionError):
        jet_inverse(Jet.zero(space, base))
