"""Whitney fields, subset-restricted selection sets, and the finiteness
functional.

A Whitney field assigns a jet to every point of a finite set; its
seminorm measures how far the jets are from being restrictions of one
smooth function. min_whitney_M is the brute-force oracle: the exact
least scale at which a constrained field exists. gamma_x_S and gamma_fp
restrict a shape field through bounded-size subsets, and the finiteness
functional takes the worst subset of a given size. The clustering and
jet-anchored construction turn refined memberships back into concrete
fields. lipschitz_select demonstrates the same finiteness mechanism for
Lipschitz selection on affine flats.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Mapping, Sequence

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import (
    IllConditionedError,
    InfeasibleProblemError,
    PreconditionError,
    SizeBudgetError,
    VerificationError,
)
from .exactq import ONE, Q, Rat, RatLike, ZERO, exact_sqrt, sqrt_enclosure
from .jets import Jet, JetSpace, mi_order, recenter_jet, recenter_matrix
from .metrics import as_point, dist2, dist_power
from .polyhedra import (
    LPResult,
    ParamPolyhedron,
    intersect,
    fm_project,
    prune_all_m,
    solve_lp_rows,
)
from .shapefields import (
    ShapeField,
    box_gamma,
    expected_labels,
    first_refinement,
    jet_in_gamma,
    refinement_witness,
)

Point = tuple[Rat, ...]


# ---------------------------------------------------------------------------
# Whitney fields


@dataclass(frozen=True)
class WhitneyField:
    """A jet P^x for every x of a finite set, each anchored at its own
    point."""

    space: JetSpace
    entries: Mapping[Point, Jet]

    def __post_init__(self) -> None:
        fixed = {}
        for p, jet in dict(self.entries).items():
            key = as_point(p)
            if jet.space != self.space:
                raise PreconditionError("WhitneyField: jet space mismatch")
            if jet.base != key:
                raise PreconditionError("WhitneyField: jet anchored off its point")
            fixed[key] = jet
        if not fixed:
            raise PreconditionError("WhitneyField: needs at least one point")
        object.__setattr__(self, "entries", fixed)

    @property
    def points(self) -> tuple[Point, ...]:
        return tuple(sorted(self.entries))

    def jet(self, x: Sequence[RatLike]) -> Jet:
        return self.entries[as_point(x)]


def _seminorm_sq_terms(field: WhitneyField):
    """Squared compatibility ratios over ordered pairs; all rational."""
    space = field.space
    pts = field.points
    for x in pts:
        Px = field.entries[x]
        for y in pts:
            if y == x:
                continue
            diff = Px - recenter_jet(field.entries[y], x)
            dsq = dist2(x, y)
            for beta in space.indices:
                v = diff.coeff(beta)
                if v != 0:
                    yield v * v / dsq ** (space.m - mi_order(beta))


def whitney_seminorm(field: WhitneyField, config: EngineConfig = DEFAULT_CONFIG) -> Rat:
    """Largest ratio |d^beta (P^x - P^y)(x)| / |x-y|^(m-|beta|).

    Maximization runs on squared quantities, which are rational even for
    irrational distances; the square root is exact when it exists and a
    certified upper enclosure otherwise. Single-point fields give 0.
    """
    best = ZERO
    for t in _seminorm_sq_terms(field):
        if t > best:
            best = t
    if best == 0:
        return ZERO
    root = exact_sqrt(best)
    if root is not None:
        return root
    return sqrt_enclosure(best, config.bisect_rel_width)[1]


def _pair_rows(
    space: JetSpace,
    pts: Sequence[Point],
    offsets: Mapping[Point, int],
    num_vars: int,
    m_index: int | None,
    M0: Rat | None,
    radius_side: str,
    config: EngineConfig,
) -> list:
    """Compatibility rows |d^beta (P^x - P^y)(x)| <= M |x-y|^(m-|beta|)
    over the joint coefficient vector; M is either the variable at
    m_index or the fixed value M0."""
    rows = []
    for x in pts:
        for y in pts:
            if y == x:
                continue
            R = recenter_matrix(space, y, x)
            for i, beta in enumerate(space.indices):
                radius = dist_power(x, y, space.m - mi_order(beta), radius_side, config)
                for sign in (ONE, -ONE):
                    a = [ZERO] * num_vars
                    a[offsets[x] + i] = sign
                    for j in range(space.dim):
                        if R[i][j] != 0:
                            a[offsets[y] + j] -= sign * R[i][j]
                    if m_index is not None:
                        a[m_index] = -radius
                        rows.append((tuple(a), ZERO))
                    else:
                        rows.append((tuple(a), M0 * radius))
    return rows


def min_whitney_M(
    S: Sequence[Sequence[RatLike]],
    constraints: Mapping[tuple, ParamPolyhedron],
    space: JetSpace,
    config: EngineConfig = DEFAULT_CONFIG,
) -> tuple[Rat, WhitneyField]:
    """Exact least M admitting a Whitney field on S with every jet in its
    point's constraint set at scale M and all compatibility bounds.

    One LP with M as an extra variable; the optimum and a witness field
    are both exact. Irrational distances use upper-enclosure radii, so
    the reported M never exceeds the true optimum.
    """
    pts = tuple(dict.fromkeys(as_point(p) for p in S))
    if not pts:
        raise PreconditionError("min_whitney_M: S must be nonempty")
    offsets = {p: i * space.dim for i, p in enumerate(pts)}
    m_index = len(pts) * space.dim
    num_vars = m_index + 1
    rows = []
    for p in pts:
        try:
            gamma = constraints[p]
        except KeyError:
            raise PreconditionError(f"min_whitney_M: no constraint at {p}") from None
        if gamma.num_vars != space.dim:
            raise PreconditionError("min_whitney_M: constraint width mismatch")
        for a, b, c in gamma.rows:
            row = [ZERO] * num_vars
            for j, coef in enumerate(a):
                row[offsets[p] + j] = coef
            row[m_index] = -c
            rows.append((tuple(row), b))
    rows.extend(
        _pair_rows(space, pts, offsets, num_vars, m_index, None, "hi", config)
    )
    m_floor = [ZERO] * num_vars
    m_floor[m_index] = -ONE
    rows.append((tuple(m_floor), ZERO))

    objective = [ZERO] * num_vars
    objective[m_index] = -ONE
    res = solve_lp_rows(rows, num_vars, objective)
    if res.status == "infeasible":
        raise InfeasibleProblemError(
            "no Whitney field satisfies the constraints at any scale", subset=pts
        )
    assert res.status == "feasible"
    w = res.witness
    entries = {
        p: Jet(space, p, tuple(w[offsets[p] + j] for j in range(space.dim)))
        for p in pts
    }
    return -res.objective, WhitneyField(space, entries)


# ---------------------------------------------------------------------------
# Selection problems


@dataclass(frozen=True)
class SelectionProblem:
    """Points with convex jet constraints; target_dim > 1 marks a
    vector-valued problem whose jet block repeats per component."""

    space: JetSpace
    E: tuple[Point, ...]
    constraints: Mapping[Point, ParamPolyhedron]
    target_dim: int = 1

    def __post_init__(self) -> None:
        pts = tuple(as_point(p) for p in self.E)
        object.__setattr__(self, "E", pts)
        object.__setattr__(
            self, "constraints", {as_point(p): g for p, g in dict(self.constraints).items()}
        )
        if len(set(pts)) != len(pts):
            raise PreconditionError("SelectionProblem: duplicate points")
        if self.target_dim < 1:
            raise PreconditionError("SelectionProblem: target_dim must be >= 1")
        width = self.space.dim * self.target_dim
        for p in pts:
            if p not in self.constraints:
                raise PreconditionError(f"SelectionProblem: missing constraint at {p}")
            if self.constraints[p].num_vars != width:
                raise PreconditionError("SelectionProblem: constraint width mismatch")
            if not self.constraints[p].monotone_in_M:
                raise PreconditionError("SelectionProblem: constraint row with c < 0")


def value_row_pair(space: JetSpace, lo: RatLike | None, hi: RatLike | None):
    """Rows pinning the order-0 coefficient into [lo, hi]; None leaves a
    side open."""
    rows = []
    unit = [ZERO] * space.dim
    unit[space.position[(0,) * space.n]] = ONE
    if hi is not None:
        rows.append((tuple(unit), Q(hi), ZERO))
    if lo is not None:
        rows.append((tuple(-u for u in unit), -Q(lo), ZERO))
    return rows


def singleton_problem(
    space: JetSpace, points: Sequence[Sequence[RatLike]], values: Sequence[RatLike]
) -> SelectionProblem:
    """Interpolation data f(x_i) = v_i as a selection problem."""
    pts = tuple(as_point(p) for p in points)
    if len(pts) != len(values):
        raise PreconditionError("singleton_problem: points/values length mismatch")
    cons = {}
    for p, v in zip(pts, values):
        rows = value_row_pair(space, v, v)
        cons[p] = ParamPolyhedron(space.dim, tuple(rows), expected_labels(p, space))
    return SelectionProblem(space, pts, cons)


def interval_problem(
    space: JetSpace,
    points: Sequence[Sequence[RatLike]],
    bounds: Sequence[tuple[RatLike | None, RatLike | None]],
) -> SelectionProblem:
    """f(x_i) constrained to an interval K(x_i) = [lo_i, hi_i]."""
    pts = tuple(as_point(p) for p in points)
    if len(pts) != len(bounds):
        raise PreconditionError("interval_problem: points/bounds length mismatch")
    cons = {}
    for p, (lo, hi) in zip(pts, bounds):
        if lo is not None and hi is not None and Q(lo) > Q(hi):
            raise PreconditionError("interval_problem: empty interval")
        rows = value_row_pair(space, lo, hi)
        cons[p] = ParamPolyhedron(space.dim, tuple(rows), expected_labels(p, space))
    return SelectionProblem(space, pts, cons)


def field_from_problem(problem: SelectionProblem, box_scale: RatLike = 1) -> ShapeField:
    """The base shape field: K(x) rows joined with |d^beta P(x)| <= M
    boxes, so the scale parameter controls the jets' size."""
    if problem.target_dim != 1:
        raise PreconditionError("field_from_problem: scalar problems only; lift first")
    space = problem.space
    gammas = []
    for p in problem.E:
        kbox = box_gamma(space, p, box_scale)
        gammas.append(intersect([problem.constraints[p].relabeled(kbox.var_labels), kbox]))
    return ShapeField(space, problem.E, tuple(gammas))


# ---------------------------------------------------------------------------
# Subset-restricted selection sets


def gamma_x_S(
    x: Sequence[RatLike],
    S: Sequence[Sequence[RatLike]],
    M0: RatLike | None,
    base_field: ShapeField,
    config: EngineConfig = DEFAULT_CONFIG,
) -> ParamPolyhedron:
    """Jets at x extendable to a Whitney field on S + {x}: every jet in
    its point's set and all pairs compatible at scale M.

    With M0 = None the output stays parametric in M; a fixed M0 bakes
    the scale in. Irrational pair distances use lower-enclosure radii so
    the output is a certified subset of the true set.
    """
    space = base_field.space
    x_pt = as_point(x)
    others = [p for p in (as_point(s) for s in S) if p != x_pt]
    pts = (x_pt, *dict.fromkeys(others))
    M_fixed = None if M0 is None else Q(M0)

    if len(pts) == 1:
        gamma = base_field.gamma(x_pt)
        if M_fixed is None:
            return gamma
        return gamma.with_rows([(a, b + M_fixed * c, ZERO) for a, b, c in gamma.rows])

    offsets = {p: i * space.dim for i, p in enumerate(pts)}
    num_vars = len(pts) * space.dim
    rows = []
    for p in pts:
        gamma = base_field.gamma(p)
        for a, b, c in gamma.rows:
            row = [ZERO] * num_vars
            for j, coef in enumerate(a):
                row[offsets[p] + j] = coef
            if M_fixed is None:
                rows.append((tuple(row), b, c))
            else:
                rows.append((tuple(row), b + M_fixed * c, ZERO))
    for a, b in _pair_rows(space, pts, offsets, num_vars, None, ONE, "lo", config):
        # the helper returns b = radius; split into (b, c) per mode
        if M_fixed is None:
            rows.append((a, ZERO, b))
        else:
            rows.append((a, M_fixed * b, ZERO))
    joint = ParamPolyhedron(num_vars, tuple(rows), None)
    out = fm_project(joint, range(space.dim), config)
    return out.relabeled(expected_labels(x_pt, space))


def gamma_fp(
    x: Sequence[RatLike],
    l: int,
    M0: RatLike | None,
    base_field: ShapeField,
    subset_cap: int,
    target_dim: int = 1,
    config: EngineConfig = DEFAULT_CONFIG,
) -> ParamPolyhedron:
    """Intersection of gamma_x_S over all subsets of E of size at most
    min(subset_cap, (target_dim + 2)^l)."""
    if l < 0 or subset_cap < 1:
        raise PreconditionError("gamma_fp: need l >= 0 and subset_cap >= 1")
    x_pt = as_point(x)
    cap = min(subset_cap, (target_dim + 2) ** l)
    E = base_field.points
    total = sum(comb(len(E), j) for j in range(0, min(cap, len(E)) + 1))
    if total > config.subset_budget:
        raise SizeBudgetError(
            f"gamma_fp: {total} subsets exceed the budget {config.subset_budget}"
        )
    pieces = []
    seen = set()
    for size in range(0, min(cap, len(E)) + 1):
        for S in itertools.combinations(E, size):
            effective = frozenset(S) | {x_pt}
            if effective in seen:
                continue
            seen.add(effective)
            pieces.append(gamma_x_S(x_pt, S, M0, base_field, config))
    out = intersect(pieces)
    if len(out.rows) > config.fm_prune_trigger:
        out = prune_all_m(out)
    return out


@dataclass(frozen=True)
class FpReport:
    hypothesis: bool  # every small subset admits a compatible jet at x
    conclusion: bool  # the intersected set is nonempty
    subsets_checked: int


def fp_nonempty_report(
    x: Sequence[RatLike],
    l: int,
    M0: RatLike,
    base_field: ShapeField,
    target_dim: int = 1,
    subset_cap: int = 10**9,
    config: EngineConfig = DEFAULT_CONFIG,
) -> FpReport:
    """Checks the implication: gamma_x_S nonempty for all #S up to
    (target_dim+2)^(l+1) forces gamma_fp(x, l) nonempty."""
    x_pt = as_point(x)
    E = base_field.points
    M_val = Q(M0)
    cap_hyp = min(subset_cap, (target_dim + 2) ** (l + 1))
    hypothesis = True
    checked = 0
    seen = set()
    for size in range(0, min(cap_hyp, len(E)) + 1):
        for S in itertools.combinations(E, size):
            effective = frozenset(S) | {x_pt}
            if effective in seen:
                continue
            seen.add(effective)
            checked += 1
            g = gamma_x_S(x_pt, S, M_val, base_field, config)
            if not solve_lp_rows([(a, b) for a, b, _ in g.rows], g.num_vars).feasible:
                hypothesis = False
                break
        if not hypothesis:
            break
    g_fp = gamma_fp(x_pt, l, M_val, base_field, subset_cap, target_dim, config)
    conclusion = solve_lp_rows(
        [(a, b) for a, b, _ in g_fp.rows], g_fp.num_vars
    ).feasible
    if hypothesis and not conclusion:
        raise VerificationError(
            "subset intersection emptied despite nonempty small subsets"
        )
    return FpReport(hypothesis, conclusion, checked)


# ---------------------------------------------------------------------------
# Finiteness functional


def finiteness_functional(
    problem: SelectionProblem,
    k: int,
    config: EngineConfig = DEFAULT_CONFIG,
) -> tuple[Rat, tuple[Point, ...]]:
    """max over subsets S of E with #S <= k of min_whitney_M(S).

    Ties go to the lexicographically least subset. Monotone in k and
    equal to min_whitney_M(E) once k >= #E.
    """
    if k < 1:
        raise PreconditionError("finiteness_functional: k must be >= 1")
    E = problem.E
    total = sum(comb(len(E), j) for j in range(1, min(k, len(E)) + 1))
    if total > config.subset_budget:
        raise SizeBudgetError(
            f"finiteness_functional: {total} subsets exceed the budget "
            f"{config.subset_budget}"
        )
    best: Rat | None = None
    best_S: tuple[Point, ...] | None = None
    for size in range(1, min(k, len(E)) + 1):
        for S in itertools.combinations(E, size):
            value, _ = min_whitney_M(S, problem.constraints, problem.space, config)
            if best is None or value > best or (value == best and S < best_S):
                best, best_S = value, S
    return best, best_S


# ---------------------------------------------------------------------------
# Clustering


@dataclass(frozen=True)
class ClusterResult:
    clusters: tuple[tuple[Point, ...], ...]
    c: Rat  # guaranteed separation factor relative to the diameter

    def __iter__(self):
        return iter(self.clusters)


def _mst_edges(pts: Sequence[Point]) -> list[tuple[Rat, int, int]]:
    """Prim's tree on squared distances; exact comparisons."""
    n = len(pts)
    in_tree = [False] * n
    in_tree[0] = True
    best = [(dist2(pts[0], pts[j]), 0) for j in range(n)]
    edges = []
    for _ in range(n - 1):
        pick = None
        for j in range(n):
            if in_tree[j]:
                continue
            if pick is None or best[j][0] < best[pick][0]:
                pick = j
        d, src = best[pick]
        edges.append((d, src, pick))
        in_tree[pick] = True
        for j in range(n):
            if not in_tree[j]:
                d2 = dist2(pts[pick], pts[j])
                if d2 < best[j][0]:
                    best[j] = (d2, pick)
    return edges


def _components_below(pts: Sequence[Point], threshold_sq: Rat) -> list[list[Point]]:
    n = len(pts)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if dist2(pts[i], pts[j]) < threshold_sq:
                parent[find(i)] = find(j)
    groups: dict[int, list[Point]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(pts[i])
    return [sorted(g) for g in groups.values()]


def cluster(S: Sequence[Sequence[RatLike]]) -> ClusterResult:
    """Split S into at least two groups whose mutual distance is at
    least diam(S) / (#S - 1).

    The cut prefers the largest multiplicative gap in the tree's edge
    lengths; if that choice misses the guaranteed separation, the
    largest tree edge is used instead, which always satisfies it.
    """
    pts = sorted(dict.fromkeys(as_point(p) for p in S))
    n = len(pts)
    if n < 2:
        raise PreconditionError("cluster: need at least two distinct points")
    c = Q(1, n - 1)
    edges = sorted(d for d, _, _ in _mst_edges(pts))
    diam_sq = max(dist2(a, b) for a, b in itertools.combinations(pts, 2))
    floor_sq = c * c * diam_sq

    # candidate threshold: above the largest relative jump in edge length
    best_gap, cut_at = None, edges[-1]
    for lo, hi in zip(edges, edges[1:]):
        if lo == 0 or hi == lo:
            continue
        gap = hi / lo
        if best_gap is None or gap > best_gap:
            best_gap, cut_at = gap, hi

    for threshold in (cut_at, edges[-1]):
        groups = _components_below(pts, threshold)
        if len(groups) < 2:
            continue
        ok = all(
            dist2(a, b) >= floor_sq
            for ga, gb in itertools.combinations(groups, 2)
            for a in ga
            for b in gb
        )
        if ok:
            return ClusterResult(tuple(tuple(g) for g in sorted(groups)), c)
    raise VerificationError("cluster: separation floor unreachable")  # pragma: no cover


# ---------------------------------------------------------------------------
# Jet-anchored field construction


def refinement_chain(
    base_field: ShapeField, l: int, config: EngineConfig = DEFAULT_CONFIG
) -> list[ShapeField]:
    out = [base_field]
    for _ in range(l):
        out.append(first_refinement(out[-1], config))
    return out


def field_from_refined_jet(
    x0: Sequence[RatLike],
    P0: Jet,
    l_star: int,
    S: Sequence[Sequence[RatLike]],
    base_field: ShapeField,
    M0: RatLike = 1,
    config: EngineConfig = DEFAULT_CONFIG,
    _chain: list[ShapeField] | None = None,
) -> WhitneyField:
    """Spread a jet of the l_star-fold refinement over S.

    Clusters S, pulls a compatible witness one refinement level down at
    each cluster's representative, and recurses inside the clusters. The
    anchored jet is preserved exactly; verify_field_construction reports
    the constant the output achieves.
    """
    x_pt = as_point(x0)
    pts = sorted(dict.fromkeys(as_point(p) for p in S))
    M_val = Q(M0)
    if x_pt not in pts:
        raise PreconditionError("field_from_refined_jet: x0 must lie in S")
    if len(pts) > l_star + 1:
        raise PreconditionError(
            "field_from_refined_jet: need #S <= l_star + 1 refinement levels"
        )
    if P0.base != x_pt:
        raise PreconditionError("field_from_refined_jet: P0 anchored off x0")
    chain = _chain if _chain is not None else refinement_chain(base_field, l_star, config)
    if not jet_in_gamma(P0, chain[l_star].gamma(x_pt), M_val):
        raise PreconditionError(
            "field_from_refined_jet: P0 outside the refined set at x0"
        )

    def build(x: Point, P: Jet, level: int, group: list[Point]) -> dict[Point, Jet]:
        if len(group) == 1:
            return {x: P}
        parts = cluster(group)
        out: dict[Point, Jet] = {}
        for part in parts.clusters:
            if x in part:
                rep, Prep = x, P
            else:
                rep = part[0]
                w = refinement_witness(
                    chain[level - 1], P, rep, M_val, config, radius_side="hi"
                )
                if w is None:
                    raise InfeasibleProblemError(
                        "field_from_refined_jet: no compatible jet one level down",
                        subset=(x, rep),
                    )
                Prep = w
            out.update(build(rep, Prep, level - 1, list(part)))
        return out

    entries = build(x_pt, P0, l_star, pts)
    field = WhitneyField(base_field.space, entries)
    assert field.jet(x_pt) == P0
    return field


def verify_field_construction(
    field: WhitneyField,
    base_field: ShapeField,
    M0: RatLike,
    config: EngineConfig = DEFAULT_CONFIG,
) -> Rat:
    """Least C with every jet in its point's set at C*M0 and all
    compatibility ratios at most C*M0. Raises when no C works."""
    M_val = Q(M0)
    if M_val <= 0:
        raise PreconditionError("verify_field_construction: M0 must be positive")
    needed = ONE
    for p in field.points:
        jet = field.entries[p]
        for a, b, c in base_field.gamma(p).rows:
            lhs = sum((coef * v for coef, v in zip(a, jet.coeffs) if coef != 0), ZERO)
            if lhs <= b:
                continue
            if c == 0:
                raise VerificationError(
                    f"field jet at {p} violates a scale-free constraint"
                )
            needed = max(needed, (lhs - b) / (M_val * c))
    sem = whitney_seminorm(field, config)
    needed = max(needed, sem / M_val)
    return needed


# ---------------------------------------------------------------------------
# Lipschitz selection on affine flats


@dataclass(frozen=True)
class Flat:
    """Affine subspace offset + span(basis) in R^D."""

    offset: tuple[Rat, ...]
    basis: tuple[tuple[Rat, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "offset", tuple(Q(v) for v in self.offset))
        object.__setattr__(
            self, "basis", tuple(tuple(Q(v) for v in vec) for vec in self.basis)
        )
        for vec in self.basis:
            if len(vec) != len(self.offset):
                raise PreconditionError("Flat: basis vector dimension mismatch")

    @property
    def ambient_dim(self) -> int:
        return len(self.offset)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def point_at(self, params: Sequence[Rat]) -> tuple[Rat, ...]:
        return tuple(
            off + sum((vec[i] * t for vec, t in zip(self.basis, params)), ZERO)
            for i, off in enumerate(self.offset)
        )


@dataclass(frozen=True)
class MetricSelectionProblem:
    """Finite metric space with an affine flat of targets per point."""

    X: tuple[Point, ...]
    dist: tuple[tuple[Rat, ...], ...]
    flats: Mapping[Point, Flat]

    def __post_init__(self) -> None:
        pts = tuple(as_point(p) for p in self.X)
        object.__setattr__(self, "X", pts)
        mat = tuple(tuple(Q(v) for v in row) for row in self.dist)
        object.__setattr__(self, "dist", mat)
        object.__setattr__(
            self, "flats", {as_point(p): f for p, f in dict(self.flats).items()}
        )
        n = len(pts)
        if len(set(pts)) != n:
            raise PreconditionError("MetricSelectionProblem: duplicate points")
        if len(mat) != n or any(len(row) != n for row in mat):
            raise PreconditionError("MetricSelectionProblem: distance matrix shape")
        for i in range(n):
            if mat[i][i] != 0:
                raise PreconditionError("MetricSelectionProblem: nonzero diagonal")
            for j in range(n):
                if mat[i][j] != mat[j][i]:
                    raise PreconditionError("MetricSelectionProblem: asymmetric matrix")
                if i != j and mat[i][j] <= 0:
                    raise PreconditionError("MetricSelectionProblem: nonpositive distance")
                for k in range(n):
                    if mat[i][j] > mat[i][k] + mat[k][j]:
                        raise PreconditionError(
                            "MetricSelectionProblem: triangle inequality fails"
                        )
        dims = set()
        for p in pts:
            if p not in self.flats:
                raise PreconditionError(f"MetricSelectionProblem: missing flat at {p}")
            dims.add(self.flats[p].ambient_dim)
        if len(dims) != 1:
            raise PreconditionError("MetricSelectionProblem: mixed ambient dimensions")

    @property
    def ambient_dim(self) -> int:
        return self.flats[self.X[0]].ambient_dim

    def d(self, x: Point, y: Point) -> Rat:
        return self.dist[self.X.index(x)][self.X.index(y)]


@dataclass(frozen=True)
class LipschitzResult:
    assignment: Mapping[Point, tuple[Rat, ...]]
    L: Rat
    interval: tuple[Rat, Rat]
    subset_bound: Rat | None = None
    subset_argmax: tuple[Point, ...] | None = None

    def __iter__(self):
        return iter((self.assignment, self.L))


def _sup_lp(problem: MetricSelectionProblem, pts: Sequence[Point]) -> LPResult:
    D = problem.ambient_dim
    offsets = {}
    width = 0
    for p in pts:
        offsets[p] = width
        width += problem.flats[p].dim
    L_index = width
    num_vars = width + 1

    def coord_row(p: Point, i: int, sign: Rat, row: list[Rat]) -> Rat:
        flat = problem.flats[p]
        for j, vec in enumerate(flat.basis):
            row[offsets[p] + j] += sign * vec[i]
        return sign * flat.offset[i]

    rows = []
    for x, y in itertools.combinations(pts, 2):
        dxy = problem.d(x, y)
        for i in range(D):
            for sign in (ONE, -ONE):
                row = [ZERO] * num_vars
                const = coord_row(x, i, sign, row) + coord_row(y, i, -sign, row)
                row[L_index] = -dxy
                rows.append((tuple(row), -const))
    floor = [ZERO] * num_vars
    floor[L_index] = -ONE
    rows.append((tuple(floor), ZERO))
    objective = [ZERO] * num_vars
    objective[L_index] = -ONE
    return solve_lp_rows(rows, num_vars, objective)


def _assignment_from(problem, pts, witness) -> dict[Point, tuple[Rat, ...]]:
    out = {}
    cursor = 0
    for p in pts:
        flat = problem.flats[p]
        params = witness[cursor : cursor + flat.dim]
        cursor += flat.dim
        out[p] = flat.point_at(params)
    return out


def _euclidean_feasible(
    problem: MetricSelectionProblem,
    pts: Sequence[Point],
    lam: Rat,
    start: Sequence[Rat] | None = None,
    max_cuts: int = 400,
) -> tuple[bool, tuple[Rat, ...] | None]:
    """Feasibility of all squared-distance constraints at L^2 = lam via
    tangent cuts; both answers are exact certificates."""
    offsets = {}
    width = 0
    for p in pts:
        offsets[p] = width
        width += problem.flats[p].dim
    cuts: list[tuple[tuple[Rat, ...], Rat]] = []

    def diff_at(witness, x, y):
        fx = problem.flats[x].point_at(witness[offsets[x] : offsets[x] + problem.flats[x].dim])
        fy = problem.flats[y].point_at(witness[offsets[y] : offsets[y] + problem.flats[y].dim])
        return tuple(a - b for a, b in zip(fx, fy))

    for it in range(max_cuts):
        if it == 0 and start is not None:
            w = tuple(start[:width])
        else:
            res = solve_lp_rows(cuts, width) if cuts else LPResult(
                "feasible", (ZERO,) * width, None
            )
            if not res.feasible:
                return False, None
            w = res.witness
        worst = None
        for x, y in itertools.combinations(pts, 2):
            delta = diff_at(w, x, y)
            lhs = sum((v * v for v in delta), ZERO)
            rhs = lam * problem.d(x, y) ** 2
            if lhs > rhs:
                excess = lhs - rhs
                if worst is None or excess > worst[0]:
                    worst = (excess, x, y, delta, rhs)
        if worst is None:
            return True, w
        _, x, y, delta, rhs = worst
        # tangent of sum of squares at delta: 2 delta . (F(x)-F(y)) <= rhs + |delta|^2
        row = [ZERO] * width
        const = ZERO
        for i, dv in enumerate(delta):
            if dv == 0:
                continue
            fx, fy = problem.flats[x], problem.flats[y]
            for j, vec in enumerate(fx.basis):
                row[offsets[x] + j] += 2 * dv * vec[i]
            for j, vec in enumerate(fy.basis):
                row[offsets[y] + j] -= 2 * dv * vec[i]
            const += 2 * dv * (fx.offset[i] - fy.offset[i])
        bound = rhs + sum((v * v for v in delta), ZERO) - const
        cuts.append((tuple(row), bound))
    raise IllConditionedError(
        "euclidean feasibility: tangent cuts did not settle within the budget"
    )


def _euclidean_lp(
    problem: MetricSelectionProblem,
    pts: Sequence[Point],
    config: EngineConfig,
) -> tuple[Rat, Rat, tuple[Rat, ...]]:
    """Certified interval for the least euclidean Lipschitz constant."""
    sup_res = _sup_lp(problem, pts)
    assert sup_res.status == "feasible"
    L_sup = -sup_res.objective
    D = problem.ambient_dim
    if L_sup == 0:
        return ZERO, ZERO, sup_res.witness
    lo, hi = L_sup * L_sup, L_sup * L_sup * D  # sup <= euc <= sqrt(D) sup
    # the sup witness is feasible at the upper bracket by the norm bound
    ok, witness = _euclidean_feasible(problem, pts, hi, start=sup_res.witness)
    assert ok, "upper bracket must be feasible"
    while hi - lo > config.bisect_rel_width * hi:
        mid = (lo + hi) / 2
        ok, w = _euclidean_feasible(problem, pts, mid, start=witness)
        if ok:
            hi, witness = mid, w
        else:
            lo = mid
    lo_root = sqrt_enclosure(lo, config.bisect_rel_width)[0] if lo > 0 else ZERO
    hi_root = sqrt_enclosure(hi, config.bisect_rel_width)[1]
    return lo_root, hi_root, witness


def lipschitz_select(
    problem: MetricSelectionProblem,
    norm: str = "sup",
    k: int | None = None,
    config: EngineConfig = DEFAULT_CONFIG,
) -> LipschitzResult:
    """Selection F(x) in K(x) minimizing the Lipschitz constant.

    sup norm: one exact LP, L is the true optimum. euclidean: bisection
    on L^2 with certified feasibility tests; L is the upper end of the
    reported interval. With k set, also computes the worst constant over
    subsets of size at most k (the finiteness-hypothesis side).
    """
    if norm not in ("sup", "euclidean"):
        raise PreconditionError("lipschitz_select: norm must be sup or euclidean")

    def solve_on(pts: Sequence[Point]) -> tuple[Rat, Rat, dict]:
        if norm == "sup":
            res = _sup_lp(problem, pts)
            if res.status != "feasible":
                raise InfeasibleProblemError(
                    "lipschitz_select: constraint system infeasible", subset=tuple(pts)
                )
            L = -res.objective
            return L, L, _assignment_from(problem, pts, res.witness)
        lo, hi, witness = _euclidean_lp(problem, pts, config)
        return lo, hi, _assignment_from(problem, pts, witness)

    lo, hi, assignment = solve_on(problem.X)
    subset_bound = None
    subset_argmax = None
    if k is not None:
        if k < 1:
            raise PreconditionError("lipschitz_select: k must be >= 1")
        total = sum(comb(len(problem.X), j) for j in range(1, min(k, len(problem.X)) + 1))
        if total > config.subset_budget:
            raise SizeBudgetError("lipschitz_select: subset budget exceeded")
        for size in range(1, min(k, len(problem.X)) + 1):
            for S in itertools.combinations(problem.X, size):
                _, s_hi, _ = solve_on(S)
                if (
                    subset_bound is None
                    or s_hi > subset_bound
                    or (s_hi == subset_bound and S < subset_argmax)
                ):
                    subset_bound, subset_argmax = s_hi, S
    return LipschitzResult(assignment, hi, (lo, hi), subset_bound, subset_argmax)
