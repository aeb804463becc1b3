"""Parametric polyhedra: the exact simplex, projection against the
existential-witness definition, pruning, box sums, and the Helly check."""

import random

import pytest

from smoothsel.config import DEFAULT_CONFIG
from smoothsel.errors import PreconditionError
from smoothsel.exactq import Q
from smoothsel.polyhedra import (
    ParamPolyhedron,
    fm_project,
    helly_family_check,
    intersect,
    is_empty,
    lp_solve,
    minkowski_box_sum,
    prune_all_m,
    prune_redundant,
    solve_lp_rows,
)


def box(num_vars, bound, M_coef=0, labels=None):
    rows = []
    for j in range(num_vars):
        unit = [Q(0)] * num_vars
        unit[j] = Q(1)
        rows.append((tuple(unit), Q(bound), Q(M_coef)))
        rows.append((tuple(-u for u in unit), Q(bound), Q(M_coef)))
    return ParamPolyhedron(num_vars, tuple(rows), labels)


# ---------------------------------------------------------------------------
# Simplex


def test_lp_hand_values():
    res = solve_lp_rows([((Q(1),), Q(3)), ((Q(-1),), Q(0))], 1, [Q(1)])
    assert res.status == "feasible"
    assert res.objective == 3
    assert res.witness == (Q(3),)


def test_lp_infeasible():
    res = solve_lp_rows([((Q(1),), Q(0)), ((Q(-1),), Q(-1))], 1, [Q(1)])
    assert res.status == "infeasible"
    assert not res.feasible


def test_lp_unbounded():
    res = solve_lp_rows([((Q(-1),), Q(0))], 1, [Q(1)])
    assert res.status == "unbounded"
    assert res.feasible


def test_lp_feasibility_without_objective_is_deterministic():
    rows = [((Q(1), Q(1)), Q(2)), ((Q(-1), Q(0)), Q(0)), ((Q(0), Q(-1)), Q(0))]
    w1 = solve_lp_rows(rows, 2).witness
    w2 = solve_lp_rows(rows, 2).witness
    assert w1 == w2
    assert all(Q(0) <= x for x in w1)


def test_lp_exact_rational_vertex():
    # maximize x + y over x/3 + y <= 1, x <= 1/7: vertex (1/7, 20/21)
    res = solve_lp_rows(
        [((Q(1, 3), Q(1)), Q(1)), ((Q(1), Q(0)), Q(1, 7)), ((Q(-1), Q(0)), Q(1)), ((Q(0), Q(-1)), Q(1))],
        2,
        [Q(1), Q(1)],
    )
    assert res.witness == (Q(1, 7), Q(20, 21))
    assert res.objective == Q(1, 7) + Q(20, 21)


def test_lp_solve_and_is_empty_track_M():
    poly = ParamPolyhedron(1, (((Q(1),), Q(-2), Q(1)), ((Q(-1),), Q(0), Q(0))))
    # 2 - M <= ... feasible only when x <= M - 2 admits x >= 0
    assert is_empty(poly, Q(1))
    assert not is_empty(poly, Q(2))
    res = lp_solve(poly, Q(3), [Q(1)])
    assert res.objective == Q(1)


# ---------------------------------------------------------------------------
# Projection


def test_projection_of_box_is_box():
    p = fm_project(box(2, 1, labels=("u", "v")), [0])
    assert p.num_vars == 1
    assert p.var_labels == ("u",)
    assert p.contains((Q(1),), Q(0))
    assert not p.contains((Q(9, 8),), Q(0))


def test_projection_couples_variables():
    # {|u| <= M, |v| <= M, u + v <= 1}: projection onto u keeps |u| <= M
    rows = list(box(2, 0, 1).rows) + [((Q(1), Q(1)), Q(1), Q(0))]
    poly = ParamPolyhedron(2, tuple(rows))
    p = fm_project(poly, [0])
    # u = 2 needs v <= -1, fine at M = 2; at M = 1/2 the box caps u
    assert p.contains((Q(2),), Q(2))
    assert not p.contains((Q(2),), Q(1, 2))


def test_projection_matches_existential_definition():
    rng = random.Random(23)
    for _ in range(12):
        nv = rng.randint(2, 3)
        rows = []
        for _ in range(rng.randint(2, 5)):
            a = tuple(Q(rng.randint(-2, 2)) for _ in range(nv))
            rows.append((a, Q(rng.randint(-1, 3)), Q(rng.randint(0, 2))))
        rows.extend(box(nv, 4, 1).rows)  # keep everything bounded
        poly = ParamPolyhedron(nv, tuple(rows))
        keep = [0]
        proj = fm_project(poly, keep)
        for _ in range(6):
            M = Q(rng.randint(0, 3), rng.choice([1, 2]))
            u = Q(rng.randint(-10, 10), 2)
            # oracle: joint feasibility with the kept variable pinned
            pinned = list(poly.rows_at(M))
            pin = [Q(0)] * nv
            pin[0] = Q(1)
            pinned.append((tuple(pin), u))
            pinned.append((tuple(-x for x in pin), -u))
            want = solve_lp_rows(pinned, nv).feasible
            assert proj.contains((u,), M) == want


# ---------------------------------------------------------------------------
# Pruning


def test_prune_all_m_drops_dominated_row():
    poly = ParamPolyhedron(
        1,
        (((Q(1),), Q(1), Q(0)), ((Q(1),), Q(2), Q(0)), ((Q(-1),), Q(0), Q(1))),
    )
    pruned = prune_all_m(poly)
    assert len(pruned.rows) == 2
    for M in (Q(0), Q(1), Q(7, 2)):
        for x in (Q(-4), Q(0), Q(1), Q(3, 2)):
            assert poly.contains((x,), M) == pruned.contains((x,), M)


def test_prune_redundant_respects_samples():
    poly = ParamPolyhedron(
        1, (((Q(1),), Q(0), Q(1)), ((Q(1),), Q(5), Q(0)), ((Q(-1),), Q(1), Q(0)))
    )
    pruned = prune_redundant(poly, [Q(1), Q(2)])
    for M in (Q(1), Q(2)):
        for x in (Q(-2), Q(0), Q(3), Q(6)):
            assert poly.contains((x,), M) == pruned.contains((x,), M)


# ---------------------------------------------------------------------------
# Intersection and box sums


def test_intersect_is_conjunction():
    a = box(2, 2, labels=("u", "v"))
    b = ParamPolyhedron(2, (((Q(1), Q(1)), Q(1), Q(0)),), ("u", "v"))
    both = intersect([a, b])
    assert both.contains((Q(1), Q(0)), Q(0))
    assert not both.contains((Q(1), Q(1)), Q(0))
    with pytest.raises(PreconditionError):
        intersect([a, box(2, 1, labels=("u", "w"))])


def test_minkowski_box_sum_of_point():
    origin = ParamPolyhedron(
        1, (((Q(1),), Q(0), Q(0)), ((Q(-1),), Q(0), Q(0))), ("u",)
    )
    fat = minkowski_box_sum(origin, {"u": (Q(1, 2), Q(1))})
    assert fat.var_labels == ("u",)
    assert fat.contains((Q(1, 2),), Q(0))
    assert fat.contains((Q(3, 2),), Q(1))
    assert not fat.contains((Q(3, 2),), Q(1, 2))


def test_minkowski_box_sum_radius_by_label_tail():
    # labels are (point, index) pairs; radii keyed by the index part
    poly = ParamPolyhedron(
        1, (((Q(1),), Q(1), Q(0)), ((Q(-1),), Q(1), Q(0))), ((("pt",), (1,)),)
    )
    fat = minkowski_box_sum(poly, {(1,): (Q(1), Q(0))})
    assert fat.contains((Q(2),), Q(0))
    assert not fat.contains((Q(5, 2),), Q(0))


# ---------------------------------------------------------------------------
# Helly


def test_helly_family_intersects():
    family = [box(2, 2), box(2, 3), ParamPolyhedron(2, (((Q(1), Q(0)), Q(0), Q(1)),))]
    assert helly_family_check(family, 2, Q(1))


def test_helly_detects_empty_pair():
    left = ParamPolyhedron(1, (((Q(1),), Q(-1), Q(0)),))  # x <= -1
    right = ParamPolyhedron(1, (((Q(-1),), Q(-1), Q(0)),))  # x >= 1
    assert not helly_family_check([left, right, box(1, 5)], 1, Q(0))
