"""Exact rational polyhedra with one symbolic scale parameter.

A ParamPolyhedron is a finite list of rows (a, b, c), each meaning
a . v <= b + M c over jet-coefficient variables v, with M a symbolic
nonnegative scale. Carrying M in every row (instead of fixing it per
call) is what lets refinements and subset intersections be built once
and then queried or searched over M. When all c >= 0 the set is
monotone nondecreasing in M, which the shape-field layer relies on.

The solvers are exact: a dense two-phase simplex with Bland's rule (so
every result is deterministic and cycling-free), Fourier-Motzkin
projection that never eliminates M, and the derived operations
(Minkowski box sums, intersections, Helly-style family checks). No
floating point anywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import PreconditionError, SizeBudgetError
from .exactq import ONE, Q, Rat, RatLike, ZERO

Row = tuple[tuple[Rat, ...], Rat, Rat]


@dataclass(frozen=True)
class ParamPolyhedron:
    """H-representation with rows a . v <= b + M c."""

    num_vars: int
    rows: tuple[Row, ...]
    var_labels: tuple[Hashable, ...] | None = None

    def __post_init__(self) -> None:
        clean = []
        for a, b, c in self.rows:
            vec = tuple(Q(x) for x in a)
            if len(vec) != self.num_vars:
                raise PreconditionError("ParamPolyhedron: row width mismatch")
            clean.append((vec, Q(b), Q(c)))
        object.__setattr__(self, "rows", tuple(clean))
        if self.var_labels is not None:
            labels = tuple(self.var_labels)
            if len(labels) != self.num_vars:
                raise PreconditionError("ParamPolyhedron: label count mismatch")
            object.__setattr__(self, "var_labels", labels)

    @classmethod
    def full_space(cls, num_vars: int, var_labels: Sequence[Hashable] | None = None) -> "ParamPolyhedron":
        return cls(num_vars, (), tuple(var_labels) if var_labels is not None else None)

    def rows_at(self, M: RatLike) -> list[tuple[tuple[Rat, ...], Rat]]:
        scale = Q(M)
        return [(a, b + scale * c) for a, b, c in self.rows]

    @property
    def monotone_in_M(self) -> bool:
        return all(c >= 0 for _, _, c in self.rows)

    def with_rows(self, rows: Iterable[Row]) -> "ParamPolyhedron":
        return ParamPolyhedron(self.num_vars, tuple(rows), self.var_labels)

    def relabeled(self, var_labels: Sequence[Hashable] | None) -> "ParamPolyhedron":
        return ParamPolyhedron(self.num_vars, self.rows, tuple(var_labels) if var_labels is not None else None)

    def contains(self, witness: Sequence[RatLike], M: RatLike) -> bool:
        """Exact membership by substitution."""
        v = [Q(x) for x in witness]
        if len(v) != self.num_vars:
            raise PreconditionError("contains: witness dimension mismatch")
        scale = Q(M)
        for a, b, c in self.rows:
            lhs = sum((coef * x for coef, x in zip(a, v) if coef != 0), ZERO)
            if lhs > b + scale * c:
                return False
        return True


@dataclass(frozen=True)
class LPResult:
    status: str  # "feasible" | "infeasible" | "unbounded"
    witness: tuple[Rat, ...] | None
    objective: Rat | None

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


def _pivot(tab: list[list[Rat]], cost: list[Rat], basis: list[int], pi: int, pj: int) -> None:
    prow = tab[pi]
    inv = ONE / prow[pj]
    if inv != 1:
        tab[pi] = prow = [v * inv for v in prow]
    hot = [k for k, v in enumerate(prow) if v != 0]
    for r, row in enumerate(tab):
        if r == pi:
            continue
        f = row[pj]
        if f == 0:
            continue
        for k in hot:
            row[k] -= f * prow[k]
    f = cost[pj]
    if f != 0:
        for k in hot:
            cost[k] -= f * prow[k]
    basis[pi] = pj


def _pivot_loop(tab: list[list[Rat]], cost: list[Rat], basis: list[int], width: int) -> str:
    """Maximize with Bland's rule. Returns "optimal" or "unbounded"."""
    while True:
        enter = next((j for j in range(width) if cost[j] > 0), None)
        if enter is None:
            return "optimal"
        leave, best = None, None
        for i, row in enumerate(tab):
            coef = row[enter]
            if coef <= 0:
                continue
            ratio = row[-1] / coef
            if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                leave, best = i, ratio
        if leave is None:
            return "unbounded"
        _pivot(tab, cost, basis, leave, enter)


def solve_lp_rows(
    rows: Sequence[tuple[Sequence[Rat], RatLike]],
    num_vars: int,
    objective: Sequence[RatLike] | None = None,
) -> LPResult:
    """Maximize objective . x over {x free : a . x <= b for each row}.

    Exact two-phase simplex on the split x = u - w with slacks; Bland's
    rule everywhere, so the optimal basis (and hence the witness) is
    deterministic. With no objective, returns the phase-1 feasible point.
    """
    m = len(rows)
    nv = num_vars
    n_slack = m
    width0 = 2 * nv + n_slack
    # Build equations a.u - a.w + s = b, flipping sign when b < 0 and
    # adding an artificial for those rows.
    tab: list[list[Rat]] = []
    art_rows: list[int] = []
    for i, (a, b) in enumerate(rows):
        vec = [Q(x) for x in a]
        if len(vec) != nv:
            raise PreconditionError("solve_lp_rows: row width mismatch")
        bb = Q(b)
        row = [ZERO] * width0 + [ZERO]
        sign = ONE if bb >= 0 else -ONE
        for j, x in enumerate(vec):
            if x != 0:
                row[j] = sign * x
                row[nv + j] = -sign * x
        row[2 * nv + i] = sign
        row[-1] = sign * bb
        tab.append(row)
        if bb < 0:
            art_rows.append(i)

    n_art = len(art_rows)
    width = width0 + n_art
    basis: list[int] = []
    if n_art:
        # Extend every row with artificial columns.
        art_of_row = {}
        for k, i in enumerate(art_rows):
            art_of_row[i] = width0 + k
        for i, row in enumerate(tab):
            rhs = row.pop()
            row.extend(ONE if art_of_row.get(i) == width0 + k else ZERO for k in range(n_art))
            row.append(rhs)
        basis = [art_of_row.get(i, 2 * nv + i) for i in range(m)]
        # Phase 1: maximize -sum(artificials); canonicalize the cost row.
        cost = [ZERO] * (width + 1)
        for k in range(n_art):
            cost[width0 + k] = -ONE
        for i in range(m):
            if basis[i] >= width0:
                for k in range(width + 1):
                    if tab[i][k] != 0:
                        cost[k] += tab[i][k]
        status = _pivot_loop(tab, cost, basis, width)
        assert status == "optimal"  # phase-1 objective is bounded above by 0
        if -cost[-1] < 0:
            return LPResult("infeasible", None, None)
        # Drive remaining artificials out of the basis.
        drop: list[int] = []
        for i in range(m):
            if basis[i] < width0:
                continue
            pj = next((j for j in range(width0) if tab[i][j] != 0), None)
            if pj is None:
                drop.append(i)
            else:
                _pivot(tab, cost, basis, i, pj)
        for i in reversed(drop):
            del tab[i]
            del basis[i]
        # Remove artificial columns (they are the trailing block).
        tab = [row[:width0] + [row[-1]] for row in tab]
    else:
        basis = [2 * nv + i for i in range(m)]

    objective_value: Rat | None = None
    if objective is not None:
        obj = [Q(x) for x in objective]
        if len(obj) != nv:
            raise PreconditionError("solve_lp_rows: objective width mismatch")
        full = [ZERO] * (width0 + 1)
        for j, x in enumerate(obj):
            full[j] = x
            full[nv + j] = -x
        cost = list(full)
        for i, row in enumerate(tab):
            cb = full[basis[i]]
            if cb != 0:
                for k in range(width0 + 1):
                    if row[k] != 0:
                        cost[k] -= cb * row[k]
        status = _pivot_loop(tab, cost, basis, width0)
        values = [ZERO] * width0
        for i, row in enumerate(tab):
            values[basis[i]] = row[-1]
        witness = tuple(values[j] - values[nv + j] for j in range(nv))
        if status == "unbounded":
            return LPResult("unbounded", witness, None)
        objective_value = -cost[-1]
        return LPResult("feasible", witness, objective_value)

    values = [ZERO] * width0
    for i, row in enumerate(tab):
        values[basis[i]] = row[-1]
    witness = tuple(values[j] - values[nv + j] for j in range(nv))
    return LPResult("feasible", witness, None)


def lp_solve(poly: ParamPolyhedron, M: RatLike, objective: Sequence[RatLike] | None = None) -> LPResult:
    """Feasibility or maximization over the polyhedron sliced at M >= 0."""
    scale = Q(M)
    if scale < 0:
        raise PreconditionError("lp_solve: M must be nonnegative")
    return solve_lp_rows(poly.rows_at(scale), poly.num_vars, objective)


def is_empty(poly: ParamPolyhedron, M: RatLike) -> bool:
    return not lp_solve(poly, M).feasible


# --- Fourier-Motzkin ------------------------------------------------------

def _normalize_row(a: Sequence[Rat], b: Rat, c: Rat) -> Row:
    lead = next((x for x in (*a, b, c) if x != 0), None)
    if lead is None:
        return tuple(a), b, c
    scale = ONE / abs(lead)
    if scale != 1:
        return tuple(x * scale for x in a), b * scale, c * scale
    return tuple(a), b, c


def _cleanup_rows(rows: Iterable[Row]) -> list[Row]:
    """Normalize, drop vacuous rows, apply same-direction dominance, dedupe."""
    by_dir: dict[tuple[Rat, ...], list[tuple[Rat, Rat]]] = {}
    for a, b, c in rows:
        a, b, c = _normalize_row(a, b, c)
        if all(x == 0 for x in a) and b >= 0 and c >= 0:
            continue  # vacuously true for every M >= 0
        by_dir.setdefault(a, []).append((b, c))
    out: list[Row] = []
    for a, offs in by_dir.items():
        # keep rows minimal in the (b, c) product order: one dominates
        # another iff both b and c are <= (for M >= 0).
        keep: list[tuple[Rat, Rat]] = []
        for b, c in sorted(set(offs)):
            if any(kb <= b and kc <= c for kb, kc in keep):
                continue
            keep = [(kb, kc) for kb, kc in keep if not (b <= kb and c <= kc)]
            keep.append((b, c))
        out.extend((a, b, c) for b, c in keep)
    out.sort()
    return out


def _rows_with_M_var(rows: Sequence[Row], num_vars: int) -> list[tuple[list[Rat], Rat]]:
    """View rows over (v, M) with M an explicit, nonnegative variable."""
    lifted = [([*a, -c], b) for a, b, c in rows]
    m_axis = [ZERO] * num_vars + [-ONE]
    lifted.append((m_axis, ZERO))  # -M <= 0
    return lifted


def _prune_rows_all_M(rows: list[Row], num_vars: int) -> list[Row]:
    """Remove rows implied by the others simultaneously for every M >= 0.

    Row i is redundant iff max{a_i.v - c_i M : other rows, M >= 0} <= b_i.
    Sound strengthening of per-sample pruning; used internally to keep
    projections small.
    """
    kept = list(rows)
    i = 0
    while i < len(kept):
        a, b, c = kept[i]
        others = kept[:i] + kept[i + 1 :]
        lifted = _rows_with_M_var(others, num_vars)
        objective = [*a, -c]
        res = solve_lp_rows(lifted, num_vars + 1, objective)
        if res.status == "infeasible" or (res.status == "feasible" and res.objective <= b):
            kept.pop(i)
        else:
            i += 1
    return kept


def fm_project(
    poly: ParamPolyhedron,
    keep: Iterable[int],
    config: EngineConfig = DEFAULT_CONFIG,
) -> ParamPolyhedron:
    """Project onto the kept variables by Fourier-Motzkin elimination.

    M is a parameter, not a variable, so it survives every elimination
    and rows stay affine in M. Exactness: (v_keep, M) satisfies the
    output iff some witness for the eliminated variables exists.
    """
    keep_set = sorted(set(keep))
    if keep_set and (keep_set[0] < 0 or keep_set[-1] >= poly.num_vars):
        raise PreconditionError("fm_project: keep indices out of range")
    to_drop = [j for j in range(poly.num_vars) if j not in set(keep_set)]
    rows = _cleanup_rows(poly.rows)

    while to_drop:
        # Next variable: the classic min(#pos * #neg) heuristic.
        def weight(j: int) -> tuple[int, int]:
            pos = sum(1 for a, _, _ in rows if a[j] > 0)
            neg = sum(1 for a, _, _ in rows if a[j] < 0)
            return pos * neg, j

        var = min(to_drop, key=weight)
        to_drop.remove(var)
        pos, neg, rest = [], [], []
        for row in rows:
            coef = row[0][var]
            (pos if coef > 0 else neg if coef < 0 else rest).append(row)
        new_rows = rest
        for (ap, bp, cp), (an, bn, cn) in itertools.product(pos, neg):
            wp = ONE / ap[var]
            wn = ONE / -an[var]
            a = tuple(wp * x + wn * y for x, y in zip(ap, an))
            new_rows.append((a, wp * bp + wn * bn, wp * cp + wn * cn))
        rows = _cleanup_rows(new_rows)
        if len(rows) > config.fm_prune_trigger:
            rows = _prune_rows_all_M(rows, poly.num_vars)
        if len(rows) > config.fm_row_cap:
            raise SizeBudgetError(
                f"fm_project: {len(rows)} rows exceed the cap {config.fm_row_cap}"
            )

    projected = [
        (tuple(a[j] for j in keep_set), b, c) for a, b, c in rows
    ]
    labels = None
    if poly.var_labels is not None:
        labels = tuple(poly.var_labels[j] for j in keep_set)
    return ParamPolyhedron(len(keep_set), tuple(_cleanup_rows(projected)), labels)


def prune_redundant(poly: ParamPolyhedron, M_samples: Sequence[RatLike]) -> ParamPolyhedron:
    """Drop rows implied by the others at every sampled M.

    The output defines the same set at each sampled M (not necessarily
    at other M values; use the internal all-M prune for that).
    """
    samples = [Q(s) for s in M_samples]
    if not samples:
        return poly
    kept = list(poly.rows)
    i = 0
    while i < len(kept):
        a, b, c = kept[i]
        others = kept[:i] + kept[i + 1 :]
        redundant = True
        for s in samples:
            sliced = [(oa, ob + s * oc) for oa, ob, oc in others]
            res = solve_lp_rows(sliced, poly.num_vars, list(a))
            if res.status == "unbounded" or (
                res.status == "feasible" and res.objective > b + s * c
            ):
                redundant = False
                break
        if redundant:
            kept.pop(i)
        else:
            i += 1
    return poly.with_rows(kept)


def prune_all_m(poly: ParamPolyhedron) -> ParamPolyhedron:
    """Drop rows implied by the others simultaneously for every M >= 0."""
    return poly.with_rows(_prune_rows_all_M(list(poly.rows), poly.num_vars))


def intersect(polys: Sequence[ParamPolyhedron]) -> ParamPolyhedron:
    """Conjunction of constraint systems over identical variables."""
    if not polys:
        raise PreconditionError("intersect: empty family")
    first = polys[0]
    for other in polys[1:]:
        if other.num_vars != first.num_vars:
            raise PreconditionError("intersect: mismatched variable counts")
        if other.var_labels != first.var_labels:
            raise PreconditionError("intersect: mismatched variable labels")
    rows: list[Row] = []
    for poly in polys:
        rows.extend(poly.rows)
    return ParamPolyhedron(first.num_vars, tuple(_cleanup_rows(rows)), first.var_labels)


def minkowski_box_sum(
    poly: ParamPolyhedron,
    radii: dict,
    config: EngineConfig = DEFAULT_CONFIG,
) -> ParamPolyhedron:
    """Minkowski sum with the box {|v_j| <= r_j + M s_j}.

    radii maps a variable's label (or its final component, or its index)
    to the pair (r, s). Computed as the projection of {v : exists w in
    poly with |v_j - w_j| <= r_j + M s_j} onto v, which keeps rows
    affine in M.
    """

    def radius_for(j: int) -> tuple[Rat, Rat]:
        label = poly.var_labels[j] if poly.var_labels is not None else None
        for key in (label, label[-1] if isinstance(label, tuple) and label else None, j):
            if key is not None and key in radii:
                r, s = radii[key]
                return Q(r), Q(s)
        raise PreconditionError(f"minkowski_box_sum: no radius for variable {j}")

    nv = poly.num_vars
    rows: list[Row] = []
    for a, b, c in poly.rows:
        rows.append(((ZERO,) * nv + a, b, c))
    for j in range(nv):
        r, s = radius_for(j)
        unit = [ZERO] * (2 * nv)
        unit[j] = ONE
        unit[nv + j] = -ONE
        rows.append((tuple(unit), r, s))
        rows.append((tuple(-x for x in unit), r, s))
    joint = ParamPolyhedron(2 * nv, tuple(rows), None)
    out = fm_project(joint, range(nv), config)
    return out.relabeled(poly.var_labels)


def helly_family_check(family: Sequence[ParamPolyhedron], dim: int, M: RatLike) -> bool:
    """True iff every subfamily of size min(dim+1, N) intersects at M.

    When true, the full intersection is asserted nonempty as well (the
    Helly conclusion in R^dim); a violation of that implication would be
    a genuine arithmetic bug and raises.
    """
    scale = Q(M)
    for poly in family:
        if poly.num_vars != dim:
            raise PreconditionError("helly_family_check: dimension mismatch")
    if not family:
        return True
    k = min(dim + 1, len(family))
    for combo in itertools.combinations(range(len(family)), k):
        rows: list[Row] = []
        for idx in combo:
            rows.extend(family[idx].rows)
        if not solve_lp_rows([(a, b + scale * c) for a, b, c in rows], dim).feasible:
            return False
    all_rows: list[Row] = []
    for poly in family:
        all_rows.extend(poly.rows)
    if not solve_lp_rows([(a, b + scale * c) for a, b, c in all_rows], dim).feasible:
        raise AssertionError("helly_family_check: subfamilies intersect but the family does not")
    return True
