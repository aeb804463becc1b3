"""Dyadic decompositions checked against an independent interval-splitting
oracle, exact partition-of-unity identities, glued interpolants that must
reproduce polynomials bit for bit, and the end-to-end solvers."""

import math
import random
from fractions import Fraction

import pytest

from smoothsel.config import DEFAULT_CONFIG
from smoothsel.errors import (
    InfeasibleProblemError,
    MinLevelBreachError,
    PreconditionError,
    SizeBudgetError,
)
from smoothsel.exactq import ONE, Q, ZERO, as_fraction
from smoothsel.finiteness import (
    SelectionProblem,
    WhitneyField,
    interval_problem,
    value_row_pair,
    whitney_seminorm,
)
from smoothsel.jets import Jet, JetSpace, eval_jet_derivative, mi_order, recenter_jet
from smoothsel.polyhedra import ParamPolyhedron
from smoothsel.selection import (
    Box,
    CZDecomposition,
    DyadicCube,
    GluedFunction,
    PartitionOfUnity,
    achieved_norm,
    build_pou,
    check_cz_geometry,
    cz_decompose,
    enclosing_dyadic,
    lift_problem,
    lifted_jet_from_components,
    make_bump,
    recursive_select,
    select,
    whitney_extend,
)
from smoothsel.shapefields import jet_in_gamma, sample_convexity

S21 = JetSpace(2, 1)
S31 = JetSpace(3, 1)


def oracle_leaves_1d(points, root_level, root_corner):
    """Independent 1-d decomposition oracle.

    Plain interval splitting over Fraction endpoints: keep subdividing the
    padded root cover until the fivefold dilate of a cube fits inside the
    outer box and meets at most one data point. Shares no geometry code
    with the implementation under test.
    """
    side0 = Fraction(2) ** root_level
    root_lo = root_corner * side0
    pad = side0 * Fraction(1, 128)
    region = (root_lo - pad, root_lo + side0 + pad)
    outer = (root_lo - 2 * side0, root_lo + 3 * side0)
    pts = sorted(as_fraction(p) for p in points)

    def descend(level, corner):
        side = Fraction(2) ** level
        lo = corner * side
        dlo = lo - side * Fraction(1, 128)
        dhi = lo + side + side * Fraction(1, 128)
        if dlo > region[1] or dhi < region[0]:
            return []
        center = lo + side / 2
        flo = center - 5 * side / 2
        fhi = center + 5 * side / 2
        fits = outer[0] <= flo and fhi <= outer[1]
        if fits and sum(1 for p in pts if flo <= p < fhi) <= 1:
            return [(level, (corner,))]
        return descend(level - 1, 2 * corner) + descend(level - 1, 2 * corner + 1)

    out = []
    top_side = side0 * 2
    j = math.floor(outer[0] / top_side)
    while j * top_side < outer[1]:
        out += descend(root_level + 1, j)
        j += 1
    return sorted(out)


def leaf_keys(dec):
    return [(c.level, c.corner) for c in dec.leaves]


def constant_jet(space, base, value):
    coeffs = [ZERO] * space.dim
    coeffs[space.position[(0,) * space.n]] = Q(value)
    return Jet(space, tuple(Q(b) for b in base), tuple(coeffs))


def pin_problem(space, pins):
    """Scalar problem with the value pinned exactly at each point."""
    cons = {
        (Q(x),): ParamPolyhedron(space.dim, value_row_pair(space, Q(v), Q(v)))
        for x, v in pins
    }
    return SelectionProblem(space, tuple(sorted(cons)), cons)


# ---------------------------------------------------------------------------
# dyadic cubes and enclosing boxes


def test_dyadic_cube_geometry():
    q = DyadicCube(-2, (3, -1))
    assert q.side == Q(1, 4)
    assert q.lo == (Q(3, 4), Q(-1, 4))
    assert q.hi == (Q(1), Q(0))
    assert q.center == (Q(7, 8), Q(-1, 8))
    assert q.parent == DyadicCube(-1, (1, -1))
    kids = q.children
    assert len(kids) == 4
    assert all(k.parent == q for k in kids)
    assert q.contains_point((Q(3, 4), Q(-1, 4)))
    assert not q.contains_point((Q(1), Q(-1, 8)))  # half-open at hi


def test_dilate_pads_symmetrically():
    q = DyadicCube(0, (0,))
    d = q.dilate(65, 64)
    assert d.lo == (Q(-1, 128),)
    assert d.hi == (Q(129, 128),)
    assert q.dilate(5, 1).lo == (Q(-2),)
    with pytest.raises(PreconditionError):
        q.dilate(1, 2)


def test_enclosing_dyadic_degenerate_and_strict_fit():
    cfg = DEFAULT_CONFIG
    root = enclosing_dyadic((Q(1, 4),), (Q(1, 4),), cfg)
    assert root.side == 1 and root.contains_point((Q(1, 4),))
    # hi must land strictly inside, so the closed box [0, 1] forces side 2
    root2 = enclosing_dyadic((ZERO,), (ONE,), cfg)
    assert root2.side == 2
    assert root2.contains_point((ONE,))


def test_enclosing_dyadic_rejects_straddle():
    with pytest.raises(PreconditionError, match="translate"):
        enclosing_dyadic((Q(-1),), (Q(1),), DEFAULT_CONFIG)


def test_box_subtract_partitions_volume():
    big = Box((ZERO, ZERO), (Q(4), Q(4)))
    hole = Box((ONE, ONE), (Q(2), Q(3)))
    pieces = big.subtract(hole)
    assert sum(p.volume() for p in pieces) + hole.clip(big).volume() == big.volume()
    for p in pieces:
        assert p.clip(hole).is_empty()


# ---------------------------------------------------------------------------
# decomposition against the oracle


def test_two_point_decomposition_matches_oracle():
    root = DyadicCube(0, (0,))
    pts = [(Q(1, 10),), (Q(9, 10),)]
    dec = cz_decompose(root, pts, "simplified", DEFAULT_CONFIG)
    expected = [
        (-3, (2,)),
        (-3, (3,)),
        (-3, (4,)),
        (-3, (5,)),
        (-2, (-1,)),
        (-2, (0,)),
        (-2, (3,)),
        (-2, (4,)),
    ]
    assert leaf_keys(dec) == expected
    assert oracle_leaves_1d([Q(1, 10), Q(9, 10)], 0, 0) == expected


def test_seeded_decompositions_match_oracle():
    rng = random.Random(2024)
    root = DyadicCube(0, (0,))
    for _ in range(12):
        pts = sorted({Q(rng.randint(0, 63), 64) for _ in range(rng.randint(0, 5))})
        dec = cz_decompose(root, [(p,) for p in pts], "simplified", DEFAULT_CONFIG)
        assert leaf_keys(dec) == oracle_leaves_1d(pts, 0, 0)
        report = check_cz_geometry(dec)
        assert report.ok, report.violations


def test_empty_and_singleton_sets_give_trivial_covers():
    root = DyadicCube(0, (0, 0))
    for pts in ([], [(Q(1, 2), Q(1, 2))]):
        dec = cz_decompose(root, pts, "simplified", DEFAULT_CONFIG)
        report = check_cz_geometry(dec)
        assert report.ok
        assert report.covered_volume == dec.region().volume()
        for leaf in dec.leaves:
            five = leaf.dilate(5, 1)
            assert sum(1 for p in pts if five.contains_point(p)) <= 1


def test_custom_predicate_tag_and_pruning():
    root = DyadicCube(0, (0,))
    dec = cz_decompose(root, [], lambda cube: cube.level <= -2, DEFAULT_CONFIG)
    assert dec.predicate_tag == "custom"
    assert all(leaf.level <= -2 for leaf in dec.leaves)
    assert check_cz_geometry(dec).ok


def test_min_level_breach_reports_cube():
    root = DyadicCube(0, (0,))
    pts = [(ZERO,), (Q(1, 2**45),)]
    with pytest.raises(MinLevelBreachError) as err:
        cz_decompose(root, pts, "simplified", DEFAULT_CONFIG)
    assert err.value.cube.level <= DEFAULT_CONFIG.min_dyadic_level


def test_geometry_flags_overlap():
    root = DyadicCube(0, (0,))
    good = cz_decompose(root, [], "simplified", DEFAULT_CONFIG)
    extra = good.leaves[0].children[0]  # nested inside an existing leaf
    bad = CZDecomposition(root, good.leaves + (extra,), "simplified")
    report = check_cz_geometry(bad)
    assert not report.ok
    assert any("sits inside" in v for v in report.violations)


def test_geometry_flags_coverage_gap():
    root = DyadicCube(0, (0,))
    good = cz_decompose(root, [], "simplified", DEFAULT_CONFIG)
    dropped = good.leaves[0]
    bad = CZDecomposition(root, good.leaves[1:], "simplified")
    report = check_cz_geometry(bad)
    assert not report.ok
    assert report.covered_volume < report.region_volume
    # the reported gap sits inside the dropped leaf
    assert report.gaps
    gap = report.gaps[0]
    assert dropped.box().contains_box(gap.clip(dropped.box()))


def test_geometry_flags_neighbor_level_jump():
    leaves = (DyadicCube(-2, (0,)), DyadicCube(-4, (4,)))
    bad = CZDecomposition(DyadicCube(0, (0,)), leaves, "custom")
    report = check_cz_geometry(bad)
    assert any("level" in v and "-4" in v for v in report.violations)


def test_seeded_2d_geometry():
    rng = random.Random(77)
    root = DyadicCube(0, (0, 0))
    for _ in range(4):
        pts = sorted(
            {
                (Q(rng.randint(0, 15), 16), Q(rng.randint(0, 15), 16))
                for _ in range(rng.randint(2, 8))
            }
        )
        dec = cz_decompose(root, pts, "simplified", DEFAULT_CONFIG)
        report = check_cz_geometry(dec)
        assert report.ok, report.violations
        assert report.covered_volume == Q(65, 64) ** 2


# ---------------------------------------------------------------------------
# bumps and partitions of unity


def test_smoothstep_bump_is_flat_at_the_ends():
    for m in (1, 2, 3):
        bump = make_bump(m, Q(1, 2))
        assert bump.eval(Q(-1, 2)) == 0 and bump.eval(ZERO) == 1
        assert bump.eval(ONE) == 1 and bump.eval(Q(3, 2)) == 0
        assert bump.eval(Q(2)) == 0  # outside support entirely
        d = bump
        for _ in range(m):
            d = d.derivative()
            assert d.eval(Q(-1, 2)) == 0 and d.eval(Q(3, 2)) == 0
            assert d.eval(ZERO) == d.eval(ONE) == 0


def test_bump_sup_bound_dominates_samples():
    bump = make_bump(2, Q(1, 128))
    d2 = bump.derivative().derivative()
    sup = d2.sup_bound()
    for i in range(200):
        t = Q(-1, 128) + Q(i, 199) * Q(130, 128)
        assert abs(d2.eval(t)) <= sup


def two_point_pou(m=2):
    root = DyadicCube(0, (0,))
    dec = cz_decompose(root, [(Q(1, 10),), (Q(9, 10),)], "simplified", DEFAULT_CONFIG)
    return dec, build_pou(dec, m, DEFAULT_CONFIG)


def test_single_leaf_partition_is_identically_one():
    leaf = DyadicCube(0, (0,))
    dec = CZDecomposition(leaf, (leaf,), "custom")
    pou = PartitionOfUnity(dec, 2, DEFAULT_CONFIG)
    for x in (ZERO, Q(1, 3), Q(1, 2), Q(127, 128), Q(-1, 256), Q(257, 256)):
        if pou.tilde(leaf, (x,)) > 0:
            assert pou.theta_sq(leaf, (x,)) == 1


def test_partition_sums_to_one_exactly():
    dec, pou = two_point_pou()
    lo = dec.region().lo[0]
    width = dec.region().hi[0] - lo
    for i in range(41):
        x = (lo + width * Q(i, 41),)
        assert pou.sum_theta_sq(x) == 1
    with pytest.raises(PreconditionError):
        pou.sum_theta_sq((Q(2),))


def test_theta_is_one_deep_inside_a_leaf():
    dec, pou = two_point_pou()
    for leaf in dec.leaves:
        assert pou.theta_sq(leaf, leaf.center) == 1


def test_theta_floats_match_exact_squares():
    dec, pou = two_point_pou()
    for i in range(11):
        x = (Q(i, 11),)
        total = 0.0
        for leaf in pou.active(x):
            t = pou.theta(leaf, x)
            assert abs(t * t - float(pou.theta_sq(leaf, x))) < 1e-12
            total += t * t
        assert abs(total - 1.0) < 1e-12


def test_tilde_jet_is_constant_one_on_the_plateau():
    dec, pou = two_point_pou()
    leaf = dec.leaves[0]
    jet = pou.tilde_jet(leaf, leaf.center, S31)
    expected = constant_jet(S31, leaf.center, 1)
    assert jet.coeffs == expected.coeffs


def test_theta_derivative_bounds_are_certified_and_frozen():
    dec, pou = two_point_pou()
    leaf = dec.leaves[0]
    assert (leaf.level, leaf.corner) == (-3, (2,))
    bounds = pou.theta_derivative_bounds(leaf)
    assert bounds == {
        (0,): Q(32),
        (1,): Q(47201280),
        (2,): Q(208821483601920),
    }
    # sampled derivative values stay below bound * side^(-order)
    sup = pou.support(leaf)
    width = sup.hi[0] - sup.lo[0]
    for i in range(25):
        x = (sup.lo[0] + width * Q(i, 25),)
        vals = pou.theta_jet_float(leaf, x, S31)
        for beta, val in zip(S31.indices, vals):
            cap = float(bounds[beta] * leaf.side ** (-mi_order(beta)))
            assert abs(val) <= cap + 1e-9


def test_build_pou_requires_sound_geometry():
    root = DyadicCube(0, (0,))
    bad = CZDecomposition(root, (root,), "custom")  # cannot cover the dilate
    with pytest.raises(PreconditionError):
        build_pou(bad, 2, DEFAULT_CONFIG)


# ---------------------------------------------------------------------------
# glued interpolants


def global_quadratic_field(points):
    """Whitney field whose order-2 jets all come from f(t) = 3 + t/2 - t^2.

    The polynomial has degree m - 1 for S31, so every jet is the same
    polynomial recentred and the glued extension must reproduce it.
    """
    jets = {}
    for p in points:
        t = Q(p)
        value = Q(3) + t / 2 - t * t
        slope = Q(1, 2) - 2 * t
        jets[(t,)] = Jet(S31, (t,), (value, slope, Q(-2)))
    return WhitneyField(S31, jets)


def test_gluing_reproduces_a_global_polynomial():
    field = global_quadratic_field([Q(1, 10), Q(9, 10)])
    root = DyadicCube(0, (0,))
    dec = cz_decompose(root, list(field.points), "simplified", DEFAULT_CONFIG)
    far = field.jet((Q(1, 10),))
    F = whitney_extend(field, dec, far, DEFAULT_CONFIG)
    for i in range(25):
        x = (Q(i, 25),)
        t = x[0]
        assert F(x) == Q(3) + t / 2 - t * t
        jet = F.jet_at(x)
        assert jet.coeff((0,)) == Q(3) + t / 2 - t * t
        assert jet.coeff((1,)) == Q(1, 2) - 2 * t
        assert jet.coeff((2,)) == -2


def test_extension_is_constant_near_a_constant_data_point():
    jets = {(Q(1, 2),): constant_jet(S21, (Q(1, 2),), Q(5, 2))}
    field = WhitneyField(S21, jets)
    root = DyadicCube(0, (0,))
    dec = cz_decompose(root, [(Q(1, 2),)], "simplified", DEFAULT_CONFIG)
    F = whitney_extend(field, dec, constant_jet(S21, (Q(1, 2),), ZERO), DEFAULT_CONFIG)
    for i in range(-4, 5):
        x = (Q(1, 2) + Q(i, 64),)
        assert F(x) == Q(5, 2)
    jet = F.jet_at((Q(1, 2),))
    assert jet.coeffs == (Q(5, 2), ZERO)


def test_extension_reproduces_jets_at_data_points():
    rng = random.Random(5)
    for _ in range(4):
        pts = sorted({Q(rng.randint(0, 64), 16) for _ in range(rng.randint(2, 5))})
        jets = {
            (p,): Jet(S21, (p,), (Q(rng.randint(-8, 8), 4), Q(rng.randint(-8, 8), 4)))
            for p in pts
        }
        field = WhitneyField(S21, jets)
        root = enclosing_dyadic((pts[0],), (pts[-1],), DEFAULT_CONFIG)
        dec = cz_decompose(root, list(jets), "simplified", DEFAULT_CONFIG)
        F = whitney_extend(field, dec, field.jet((pts[0],)), DEFAULT_CONFIG)
        for p in pts:
            assert F.jet_at((p,)).coeffs == jets[(p,)].coeffs


def test_extension_satisfies_a_uniform_whitney_bound():
    # sampled sup of |d^beta (F - P^y)(x)| / (M* |x-y|^(m-|beta|)) across a
    # seeded suite; the constant 64 was fixed from a measured worst of ~22
    rng = random.Random(7)
    worst = ZERO
    for _ in range(6):
        pts = sorted({Q(rng.randint(0, 64), 16) for _ in range(rng.randint(2, 5))})
        jets = {
            (p,): Jet(S21, (p,), (Q(rng.randint(-8, 8), 4), Q(rng.randint(-8, 8), 4)))
            for p in pts
        }
        field = WhitneyField(S21, jets)
        mstar = whitney_seminorm(field)
        if mstar == 0:
            continue
        root = enclosing_dyadic((pts[0],), (pts[-1],), DEFAULT_CONFIG)
        dec = cz_decompose(root, list(jets), "simplified", DEFAULT_CONFIG)
        F = whitney_extend(field, dec, field.jet((pts[0],)), DEFAULT_CONFIG)
        lo, hi = root.lo[0], root.hi[0]
        for i in range(40):
            x = (lo + (hi - lo) * Q(i, 40),)
            y = min(jets, key=lambda p: abs(p[0] - x[0]))
            gap = abs(y[0] - x[0])
            if gap == 0:
                continue
            jx = F.jet_at(x)
            py = field.jet(y)
            for beta in S21.indices:
                num = abs(eval_jet_derivative(jx, beta, x) - eval_jet_derivative(py, beta, x))
                quotient = num / (mstar * gap ** (S21.m - mi_order(beta)))
                worst = max(worst, quotient)
    assert ZERO < worst < 64


def test_glued_function_rejects_points_outside_cover():
    field = global_quadratic_field([Q(1, 10), Q(9, 10)])
    root = DyadicCube(0, (0,))
    dec = cz_decompose(root, list(field.points), "simplified", DEFAULT_CONFIG)
    F = whitney_extend(field, dec, field.jet((Q(1, 10),)), DEFAULT_CONFIG)
    with pytest.raises(PreconditionError):
        F((Q(3),))


# ---------------------------------------------------------------------------
# the direct solver


def test_select_parabola_pattern():
    prob = interval_problem(
        S21,
        [(ZERO,), (ONE,), (Q(2),)],
        [(ZERO, ZERO), (ONE, ONE), (ZERO, ZERO)],
    )
    res = select(prob, k=3)
    assert res.M0 == 1 and res.M_full == 1 and res.ratio == 1
    assert res.k == 3 and res.geometry.ok
    assert res.F((Q(1, 2),)) == Q(3, 4)
    assert res.F((Q(3, 2),)) == Q(3, 4)
    for z, v in (((ZERO,), ZERO), ((ONE,), ONE), ((Q(2),), ZERO)):
        assert res.F(z) == v
    assert any("membership" in line for line in res.checks)


def test_select_with_no_constraints_returns_zero():
    cons = {
        (ZERO,): ParamPolyhedron(S21.dim, ()),
        (ONE,): ParamPolyhedron(S21.dim, ()),
    }
    prob = SelectionProblem(S21, ((ZERO,), (ONE,)), cons)
    res = select(prob)
    assert res.M0 == 0 and res.ratio is None
    for i in range(5):
        assert res.F((Q(i, 4),)) == 0


def test_select_reports_minimal_infeasible_subset():
    rows = value_row_pair(S21, ONE, ONE) + value_row_pair(S21, ZERO, ZERO)
    cons = {
        (ZERO,): ParamPolyhedron(S21.dim, value_row_pair(S21, ZERO, ONE)),
        (ONE,): ParamPolyhedron(S21.dim, rows),  # value pinned to 1 and to 0
    }
    prob = SelectionProblem(S21, ((ZERO,), (ONE,)), cons)
    with pytest.raises(InfeasibleProblemError) as err:
        select(prob)
    assert err.value.subset == (((ONE,)),) or err.value.subset == (((Q(1),),))


def test_select_seeded_interval_problems():
    rng = random.Random(11)
    for _ in range(8):
        xs = sorted({Q(rng.randint(0, 40), 8) for _ in range(rng.randint(2, 6))})
        triples = []
        for x in xs:
            mid = Q(rng.randint(-6, 6), 3)
            width = Q(rng.randint(0, 3), 2)
            triples.append(((x,), mid - width, mid + width))
        prob = interval_problem(
            S21, [t[0] for t in triples], [(t[1], t[2]) for t in triples]
        )
        res = select(prob, k=3)
        assert res.geometry.ok
        assert res.ratio is None or res.ratio >= 1
        for (z,), lo, hi in triples:
            jet = res.F.jet_at((z,))
            assert jet_in_gamma(jet, prob.constraints[(z,)], res.M_full)
            assert lo <= jet.coeff((0,)) <= hi


def test_select_rejects_vector_targets():
    cons = {(ZERO,): ParamPolyhedron(2 * S21.dim, ())}
    prob = SelectionProblem(S21, ((ZERO,),), cons, target_dim=2)
    with pytest.raises(PreconditionError, match="lift"):
        select(prob)


def test_select_handles_negative_coordinates():
    # the internal frame shifts the data into the first orthant and the
    # result must come back in user coordinates
    prob = pin_problem(S21, [(Q(-3, 2), Q(1)), (Q(1, 2), Q(2))])
    res = select(prob)
    assert res.F((Q(-3, 2),)) == 1
    assert res.F((Q(1, 2),)) == 2


def test_achieved_norm_of_constant_and_parabola():
    prob = pin_problem(S21, [(ZERO, Q(7)), (ONE, Q(7))])
    res = select(prob)
    norms = achieved_norm(res.F, 33)
    assert norms[(1,)] == 0.0 and norms[(0,)] == 7.0

    parabola = interval_problem(
        S21,
        [(ZERO,), (ONE,), (Q(2),)],
        [(ZERO, ZERO), (ONE, ONE), (ZERO, ZERO)],
    )
    res2 = select(parabola, k=3)
    norms2 = achieved_norm(res2.F, 65)
    assert norms2 == {(0,): 2.0, (1,): 1.0}


def test_achieved_norm_grid_refinement_is_monotone():
    prob = pin_problem(S21, [(ZERO, ZERO), (ONE, Q(1)), (Q(3), Q(-1))])
    res = select(prob)
    coarse = achieved_norm(res.F, 9)
    fine = achieved_norm(res.F, 17)  # shares every coarse grid point
    for beta, sup in coarse.items():
        assert fine[beta] >= sup


# ---------------------------------------------------------------------------
# lifting vector problems


def window_problem(lo, hi):
    cons = {
        (ZERO,): ParamPolyhedron(
            S21.dim, value_row_pair(S21, Q(lo), Q(hi))
        )
    }
    return SelectionProblem(S21, ((ZERO,),), cons)


def test_lift_pins_value_and_windows_the_gradient():
    field = lift_problem(window_problem(1, 2))
    assert field.space.m == 3 and field.space.n == 2
    x_lift = (ZERO, ZERO)
    gamma = field.gamma(x_lift)
    zero_pos = field.space.position[(0, 0)]
    grad_pos = field.space.position[(0, 1)]
    pinned = [r for r in gamma.rows if r[0][zero_pos] != 0 and r[2] == 0]
    assert len(pinned) == 2 and all(r[1] == 0 for r in pinned)
    window = [r for r in gamma.rows if r[0][grad_pos] != 0 and r[2] == 0]
    bounds = sorted(r[1] * r[0][grad_pos] for r in window)
    assert bounds == [ONE, Q(2)]  # xi <= 2 and -xi <= -1, i.e. xi in [1, 2]


def test_lift_rejects_rows_binding_derivatives():
    row = [ZERO] * S21.dim
    row[S21.position[(1,)]] = ONE
    cons = {(ZERO,): ParamPolyhedron(S21.dim, ((tuple(row), ONE, ZERO),))}
    prob = SelectionProblem(S21, ((ZERO,),), cons)
    with pytest.raises(PreconditionError, match="function values"):
        lift_problem(prob)


def test_lift_enforces_the_dimension_cap():
    space = JetSpace(3, 2)
    cons = {(ZERO, ZERO): ParamPolyhedron(2 * space.dim, ())}
    prob = SelectionProblem(space, ((ZERO, ZERO),), cons, target_dim=2)
    with pytest.raises(SizeBudgetError):
        lift_problem(prob)


def test_lifted_witness_lies_in_the_lifted_body():
    field = lift_problem(window_problem(1, 2))
    component = Jet(S21, (ZERO,), (Q(3, 2), ONE))  # value 3/2 inside [1, 2]
    witness = lifted_jet_from_components(field.space, (ZERO,), [component])
    assert witness.coeff((0, 0)) == 0
    assert witness.coeff((0, 1)) == Q(3, 2)
    assert jet_in_gamma(witness, field.gamma((ZERO, ZERO)), Q(4))
    outside = lifted_jet_from_components(
        field.space, (ZERO,), [Jet(S21, (ZERO,), (Q(5), ZERO))]
    )
    assert not jet_in_gamma(outside, field.gamma((ZERO, ZERO)), Q(100))


def test_lifted_field_is_sampled_convex():
    field = lift_problem(window_problem(-1, 1))
    report = sample_convexity(field, Q(8), Q(4), trials=40, seed=3)
    assert report.ok


def test_lifted_jet_rejects_mismatched_components():
    field = lift_problem(window_problem(0, 1))
    wrong_space = Jet(JetSpace(3, 1), (ZERO,), (ZERO,) * JetSpace(3, 1).dim)
    with pytest.raises(PreconditionError):
        lifted_jet_from_components(field.space, (ZERO,), [wrong_space])


# ---------------------------------------------------------------------------
# the recursive solver


def test_recursive_single_point_terminates_in_one_level():
    prob = pin_problem(S21, [(Q(1, 2), Q(3))])
    res = recursive_select(prob)
    assert res.method == "recursive"
    assert res.M0 == 3
    assert not any(isinstance(p, GluedFunction) for p in res.F.pieces.values())
    assert res.F((Q(1, 2),)) == 3
    assert res.F((ZERO,)) == 3


def test_recursive_unconstrained_pair_hits_the_base_case():
    cons = {
        (ZERO,): ParamPolyhedron(S21.dim, ()),
        (ONE,): ParamPolyhedron(S21.dim, ()),
    }
    prob = SelectionProblem(S21, ((ZERO,), (ONE,)), cons)
    res = recursive_select(prob)
    assert any("base case" in line for line in res.checks)
    assert res.F((Q(1, 3),)) == 0


def test_recursive_close_pair_keeps_pinned_values():
    prob = pin_problem(S21, [(ZERO, ZERO), (Q(1, 64), Q(1, 64))])
    res = recursive_select(prob)
    assert res.F((ZERO,)) == 0
    assert res.F((Q(1, 64),)) == Q(1, 64)
    assert any("final data-point membership" in line for line in res.checks)


def test_recursive_seeded_boxes_verify():
    rng = random.Random(3)
    for _ in range(2):
        xs = sorted({Q(rng.randint(0, 32), 8) for _ in range(rng.randint(2, 3))})
        triples = []
        for x in xs:
            mid = Q(rng.randint(-4, 4), 2)
            width = Q(rng.randint(1, 4), 4)
            triples.append(((x,), mid - width, mid + width))
        prob = interval_problem(
            S21, [t[0] for t in triples], [(t[1], t[2]) for t in triples]
        )
        res = recursive_select(prob)
        for (z,), lo, hi in triples:
            jet = res.F.jet_at((z,))
            member = any(
                jet_in_gamma(jet, prob.constraints[(z,)], res.M0 * Q(64) * 2**k)
                for k in range(7)
            )
            assert member


def test_recursive_rejects_vector_targets():
    cons = {(ZERO,): ParamPolyhedron(2 * S21.dim, ())}
    prob = SelectionProblem(S21, ((ZERO,),), cons, target_dim=2)
    with pytest.raises(PreconditionError):
        recursive_select(prob)
