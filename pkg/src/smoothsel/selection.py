"""Dyadic cube geometry, partitions of unity, and glued interpolants.

The guaranteed pipeline splits a root cube until every piece sees at
most one data point, weights each piece with the square of a normalized
tensor-product bump, and glues per-piece polynomials into one C^m
function whose jets at the data points reproduce a Whitney field
exactly.  An experimental solver drives the same geometry through the
label-descent machinery (transport, relabel) instead of the one-point
rule, post-verifying every certificate it touches.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import (
    IllConditionedError,
    InfeasibleProblemError,
    MinLevelBreachError,
    PreconditionError,
    SizeBudgetError,
    ThresholdAmbiguousError,
    VerificationError,
)
from .exactq import ONE, Q, Rat, RatLike, ZERO, as_fraction, qstr
from .finiteness import (
    SelectionProblem,
    WhitneyField,
    field_from_problem,
    finiteness_functional,
    min_whitney_M,
    refinement_chain,
)
from .jets import (
    Jet,
    JetSpace,
    MultiIndex,
    enumerate_multiindices,
    eval_jet,
    jet_inverse,
    jet_multiply,
    label_depth,
    mi_add,
    mi_binomial,
    mi_order,
    mi_sub,
    multiindex_key,
    multiindex_leq,
    recenter_jet,
    subset_less,
)
from .metrics import Point, as_point, dist2
from .polyhedra import solve_lp_rows
from .shapefields import (
    BasisCertificate,
    ShapeField,
    field_from_rows,
    jet_in_gamma,
    relabel,
    transport,
    verify_basis_report,
)


# ---------------------------------------------------------------------------
# Univariate polynomial scraps (coefficient tuples, ascending powers)


def _poly_eval(coeffs: Sequence[Rat], s: Rat) -> Rat:
    acc = ZERO
    for c in reversed(coeffs):
        acc = acc * s + c
    return acc


def _poly_add(p: Sequence[Rat], q: Sequence[Rat]) -> tuple[Rat, ...]:
    width = max(len(p), len(q))
    return tuple(
        (p[i] if i < len(p) else ZERO) + (q[i] if i < len(q) else ZERO)
        for i in range(width)
    )


def _poly_mul(p: Sequence[Rat], q: Sequence[Rat]) -> tuple[Rat, ...]:
    if not p or not q:
        return ()
    out = [ZERO] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return tuple(out)


def _poly_deriv(coeffs: Sequence[Rat]) -> tuple[Rat, ...]:
    return tuple(Q(i) * c for i, c in enumerate(coeffs) if i > 0)


def _poly_affine(coeffs: Sequence[Rat], c0: Rat, c1: Rat) -> tuple[Rat, ...]:
    """p(c0 + c1*s) as a polynomial in s."""
    res: tuple[Rat, ...] = ()
    for c in reversed(coeffs):
        res = _poly_add(_poly_mul(res, (c0, c1)), (c,))
    return res


@lru_cache(maxsize=None)
def _smoothstep(m: int) -> tuple[Rat, ...]:
    """The degree-(2m+1) polynomial with S(0)=0, S(1)=1 and m flat
    derivatives at both ends: s^(m+1) * sum_k C(m+k, k) (1-s)^k."""
    if m < 0:
        raise PreconditionError("_smoothstep: order must be >= 0")
    total: tuple[Rat, ...] = ()
    one_minus = (ONE, -ONE)
    power: tuple[Rat, ...] = (ONE,)
    for k in range(m + 1):
        total = _poly_add(total, tuple(Q(math.comb(m + k, k)) * c for c in power))
        power = _poly_mul(power, one_minus)
    return (ZERO,) * (m + 1) + total


# ---------------------------------------------------------------------------
# One-dimensional bumps


@dataclass(frozen=True)
class SmoothBump:
    """Piecewise-polynomial cutoff on the t axis: zero up to -transition,
    rises to 1, holds on [0, 1], falls back to zero by 1 + transition.

    Pieces are (a, c, coeffs) with the polynomial written in the local
    coordinate s = (t - a)/(c - a); derivatives return the same shape.
    """

    transition: Rat
    pieces: tuple[tuple[Rat, Rat, tuple[Rat, ...]], ...]

    def eval(self, t: RatLike) -> Rat:
        tq = Q(t)
        for a, c, coeffs in self.pieces:
            if a <= tq <= c:
                return _poly_eval(coeffs, (tq - a) / (c - a))
        return ZERO

    def derivative(self) -> "SmoothBump":
        return SmoothBump(
            self.transition,
            tuple(
                (a, c, tuple(v / (c - a) for v in _poly_deriv(coeffs)))
                for a, c, coeffs in self.pieces
            ),
        )

    def sup_bound(self) -> Rat:
        """Upper bound for sup |b(t)|: coefficient-sum bound per piece."""
        best = ZERO
        for _, _, coeffs in self.pieces:
            total = sum((abs(c) for c in coeffs), ZERO)
            if total > best:
                best = total
        return best


@lru_cache(maxsize=None)
def make_bump(m: int, transition: Rat) -> SmoothBump:
    tau = Q(transition)
    if m < 1:
        raise PreconditionError("make_bump: smoothness order must be >= 1")
    if not 0 < tau <= 1:
        raise PreconditionError("make_bump: transition width must lie in (0, 1]")
    rise = _smoothstep(m)
    fall = _poly_affine(rise, ONE, -ONE)
    return SmoothBump(
        tau,
        (
            (-tau, ZERO, rise),
            (ZERO, ONE, (ONE,)),
            (ONE, ONE + tau, fall),
        ),
    )


# ---------------------------------------------------------------------------
# Boxes and dyadic cubes


def rfloor(value: RatLike) -> int:
    f = as_fraction(Q(value))
    return f.numerator // f.denominator


@dataclass(frozen=True)
class Box:
    """Half-open axis box prod [lo_nu, hi_nu); empty when any hi <= lo."""

    lo: Point
    hi: Point

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", as_point(self.lo))
        object.__setattr__(self, "hi", as_point(self.hi))
        if len(self.lo) != len(self.hi):
            raise PreconditionError("Box: lo/hi dimension mismatch")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def is_empty(self) -> bool:
        return any(h <= l for l, h in zip(self.lo, self.hi))

    def volume(self) -> Rat:
        if self.is_empty():
            return ZERO
        acc = ONE
        for l, h in zip(self.lo, self.hi):
            acc *= h - l
        return acc

    def contains_point(self, x: Sequence[RatLike]) -> bool:
        pt = as_point(x)
        return all(l <= v < h for l, v, h in zip(self.lo, pt, self.hi))

    def contains_box(self, other: "Box") -> bool:
        if other.is_empty():
            return True
        return all(
            sl <= ol and oh <= sh
            for sl, sh, ol, oh in zip(self.lo, self.hi, other.lo, other.hi)
        )

    def clip(self, other: "Box") -> "Box":
        return Box(
            tuple(max(a, b) for a, b in zip(self.lo, other.lo)),
            tuple(min(a, b) for a, b in zip(self.hi, other.hi)),
        )

    def meets_closed(self, other: "Box") -> bool:
        """Whether the closures intersect. Empty boxes meet nothing."""
        if self.is_empty() or other.is_empty():
            return False
        return all(
            max(sl, ol) <= min(sh, oh)
            for sl, sh, ol, oh in zip(self.lo, self.hi, other.lo, other.hi)
        )

    def subtract(self, other: "Box") -> list["Box"]:
        """self minus other as disjoint half-open boxes."""
        if self.is_empty():
            return []
        c = self.clip(other)
        if c.is_empty():
            return [self]
        out: list[Box] = []
        lo = list(self.lo)
        hi = list(self.hi)
        for nu in range(self.dim):
            if lo[nu] < c.lo[nu]:
                cap = hi.copy()
                cap[nu] = c.lo[nu]
                out.append(Box(tuple(lo), tuple(cap)))
                lo[nu] = c.lo[nu]
            if c.hi[nu] < hi[nu]:
                base = lo.copy()
                base[nu] = c.hi[nu]
                out.append(Box(tuple(base), tuple(hi)))
                hi[nu] = c.hi[nu]
        return [b for b in out if not b.is_empty()]


@dataclass(frozen=True)
class DyadicCube:
    """prod_nu [2^level * corner_nu, 2^level * (corner_nu + 1))."""

    level: int
    corner: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "corner", tuple(int(c) for c in self.corner))
        if not self.corner:
            raise PreconditionError("DyadicCube: zero-dimensional corner")

    @property
    def side(self) -> Rat:
        return Q(2) ** self.level

    @property
    def lo(self) -> Point:
        s = self.side
        return tuple(s * c for c in self.corner)

    @property
    def hi(self) -> Point:
        s = self.side
        return tuple(s * (c + 1) for c in self.corner)

    @property
    def center(self) -> Point:
        s = self.side
        return tuple(s * c + s / 2 for c in self.corner)

    def box(self) -> Box:
        return Box(self.lo, self.hi)

    def dilate(self, num: int, den: int = 1) -> Box:
        if num < den or den < 1:
            raise PreconditionError("dilate: factor must be >= 1")
        pad = self.side * Q(num - den, 2 * den)
        return Box(
            tuple(v - pad for v in self.lo),
            tuple(v + pad for v in self.hi),
        )

    @property
    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level + 1, tuple(c >> 1 for c in self.corner))

    @property
    def children(self) -> tuple["DyadicCube", ...]:
        n = len(self.corner)
        return tuple(
            DyadicCube(
                self.level - 1,
                tuple(2 * c + b for c, b in zip(self.corner, bits)),
            )
            for bits in itertools.product((0, 1), repeat=n)
        )

    def contains_point(self, x: Sequence[RatLike]) -> bool:
        return self.box().contains_point(x)

    def sort_key(self) -> tuple:
        return (self.level, self.corner)


def enclosing_dyadic(
    lo: Sequence[RatLike],
    hi: Sequence[RatLike],
    config: EngineConfig = DEFAULT_CONFIG,
) -> DyadicCube:
    """Smallest dyadic cube containing the closed box [lo, hi].

    No dyadic cube straddles a coordinate hyperplane through the origin,
    so boxes with lo < 0 <= hi on some axis are rejected; shift first.
    A degenerate box (single point) gets a unit cube, documented so the
    choice is reproducible.
    """
    lo_pt = as_point(lo)
    hi_pt = as_point(hi)
    if len(lo_pt) != len(hi_pt) or not lo_pt:
        raise PreconditionError("enclosing_dyadic: bad box dimensions")
    if any(h < l for l, h in zip(lo_pt, hi_pt)):
        raise PreconditionError("enclosing_dyadic: lo exceeds hi")
    if any(l < 0 <= h for l, h in zip(lo_pt, hi_pt)):
        raise PreconditionError(
            "enclosing_dyadic: box straddles a coordinate axis; translate it first"
        )
    extent = max(h - l for l, h in zip(lo_pt, hi_pt))
    level = 0
    if extent > 0:
        while Q(2) ** level < extent:
            level += 1
        while level > config.min_dyadic_level and Q(2) ** (level - 1) >= extent:
            level -= 1
    for L in range(level, level + 400):
        side = Q(2) ** L
        corner = tuple(rfloor(l / side) for l in lo_pt)
        if all(h < side * (c + 1) for h, c in zip(hi_pt, corner)):
            return DyadicCube(L, corner)
    raise SizeBudgetError("enclosing_dyadic: no aligned cube found")


# ---------------------------------------------------------------------------
# Calderon-Zygmund style decomposition


@dataclass(frozen=True)
class CZDecomposition:
    """Finite family of stopping cubes around a root cube.

    Leaves are the maximal admissible dyadic cubes whose dilates touch
    the root's dilate; they tile the root's dilate exactly and are kept
    in (level, corner) order.
    """

    root: DyadicCube
    leaves: tuple[DyadicCube, ...]
    predicate_tag: str
    dilate_num: int = 65
    dilate_den: int = 64
    outer: int = 5

    def region(self) -> Box:
        return self.root.dilate(self.dilate_num, self.dilate_den)


def cz_decompose(
    Q0: DyadicCube,
    E: Sequence[Sequence[RatLike]],
    predicate: str | Callable[[DyadicCube], bool] = "simplified",
    config: EngineConfig = DEFAULT_CONFIG,
) -> CZDecomposition:
    """Split outward-of-and-including Q0 into maximal admissible cubes.

    A cube is admissible when its outer dilate sits inside the root's
    outer dilate and the point-count rule holds: with the simplified
    predicate, at most one data point in the outer dilate; a callable
    predicate replaces the point-count part only.  Cubes whose small
    dilate misses the root's small dilate are dropped; the recursion
    descends level by level and reports a breach of the minimum level
    instead of looping forever on a faulty predicate.
    """
    n = len(Q0.corner)
    pts = sorted({as_point(p) for p in E})
    for p in pts:
        if len(p) != n:
            raise PreconditionError("cz_decompose: point dimension mismatch")
    outer_box = Q0.dilate(config.outer_factor)
    region = Q0.dilate(config.dilate_num, config.dilate_den)

    if predicate == "simplified":
        tag = "simplified"

        def extra(cube: DyadicCube) -> bool:
            box5 = cube.dilate(config.outer_factor)
            return sum(1 for p in pts if box5.contains_point(p)) <= 1

    elif callable(predicate):
        tag = "custom"
        extra = predicate
    else:
        raise PreconditionError(f"cz_decompose: unknown predicate {predicate!r}")

    # Roots one level up can never be admissible (their outer dilate is
    # too wide), so starting there guarantees every leaf is maximal.
    top_level = Q0.level + 1
    side = Q(2) ** top_level
    ranges = []
    for nu in range(n):
        j0 = rfloor(outer_box.lo[nu] / side)
        j1 = -rfloor(-outer_box.hi[nu] / side) - 1
        ranges.append(range(j0, j1 + 1))
    stack = [DyadicCube(top_level, c) for c in itertools.product(*ranges)]

    leaves: list[DyadicCube] = []
    while stack:
        cube = stack.pop()
        if not cube.dilate(config.dilate_num, config.dilate_den).meets_closed(region):
            continue
        if outer_box.contains_box(cube.dilate(config.outer_factor)) and extra(cube):
            leaves.append(cube)
            continue
        if cube.level <= config.min_dyadic_level:
            raise MinLevelBreachError(
                "cz_decompose: subdivision reached the minimum dyadic level",
                cube=cube,
            )
        stack.extend(cube.children)

    leaves.sort(key=DyadicCube.sort_key)
    return CZDecomposition(
        Q0,
        tuple(leaves),
        tag,
        config.dilate_num,
        config.dilate_den,
        config.outer_factor,
    )


@dataclass(frozen=True)
class CZGeometryReport:
    violations: tuple[str, ...]
    gaps: tuple[Box, ...]
    neighbor_pairs: int
    covered_volume: Rat
    region_volume: Rat

    @property
    def ok(self) -> bool:
        return not self.violations


def check_cz_geometry(dec: CZDecomposition) -> CZGeometryReport:
    """Audit a decomposition: leaf disjointness, exact volume coverage
    of the root's dilate, sidelength ratio of touching dilates, and the
    outer-dilate containment every leaf must satisfy."""
    leaves = dec.leaves
    violations: list[str] = []
    region = dec.region()
    outer_box = dec.root.dilate(dec.outer)

    seen: set[tuple[int, tuple[int, ...]]] = set()
    for q in leaves:
        key = (q.level, q.corner)
        if key in seen:
            violations.append(f"duplicate leaf at level {q.level}, corner {q.corner}")
        seen.add(key)

    if leaves:
        max_level = max(q.level for q in leaves)
        for q in leaves:
            c = q.corner
            for lv in range(q.level + 1, max_level + 1):
                c = tuple(v >> 1 for v in c)
                if (lv, c) in seen:
                    violations.append(
                        f"leaf at level {q.level}, corner {q.corner} sits inside "
                        f"the leaf at level {lv}, corner {c}"
                    )
                    break

    covered = ZERO
    for q in leaves:
        covered += q.box().clip(region).volume()
    region_volume = region.volume()
    gaps: tuple[Box, ...] = ()
    if covered != region_volume:
        violations.append(
            f"coverage: leaves account for {qstr(covered)} of {qstr(region_volume)}"
        )
        pieces = [region]
        for q in leaves:
            nxt: list[Box] = []
            for g in pieces:
                nxt.extend(g.subtract(q.box()))
            pieces = nxt
            if not pieces or len(pieces) > 256:
                break
        gaps = tuple(pieces[:3])

    # Touching dilates found by a sweep along the first axis; the
    # window holds only intervals still open at the current start.
    neighbor_pairs = 0
    dilates = [q.dilate(dec.dilate_num, dec.dilate_den) for q in leaves]
    intervals = sorted(
        (d.lo[0], d.hi[0], i) for i, d in enumerate(dilates)
    )
    window: list[tuple[Rat, int]] = []
    for xlo, xhi, i in intervals:
        window = [(ahi, j) for ahi, j in window if ahi >= xlo]
        for _, j in window:
            if dilates[i].meets_closed(dilates[j]):
                neighbor_pairs += 1
                if abs(leaves[i].level - leaves[j].level) > 1:
                    violations.append(
                        f"sidelength ratio: touching leaves at levels "
                        f"{leaves[i].level} and {leaves[j].level}"
                    )
        window.append((xhi, i))

    for q in leaves:
        if not outer_box.contains_box(q.dilate(dec.outer)):
            violations.append(
                f"leaf at level {q.level}, corner {q.corner} has its outer "
                f"dilate escaping the root's"
            )

    if len(violations) > 32:
        violations = violations[:32] + ["further violations truncated"]
    return CZGeometryReport(
        tuple(violations), gaps, neighbor_pairs, covered, region_volume
    )


# ---------------------------------------------------------------------------
# Partition of unity


class PartitionOfUnity:
    """Squared-normalized tensor bumps over a decomposition's leaves.

    theta_tilde(Q) is 1 on Q and supported in Q's small dilate; theta(Q)
    is theta_tilde(Q) divided by the square root of G, the sum of all
    squared tildes, so the squares of the thetas sum to one wherever the
    leaves cover.  Everything except the final square root is exact.
    """

    def __init__(
        self,
        dec: CZDecomposition,
        m: int,
        config: EngineConfig = DEFAULT_CONFIG,
    ) -> None:
        if m < 1:
            raise PreconditionError("PartitionOfUnity: order must be >= 1")
        if not dec.leaves:
            raise PreconditionError("PartitionOfUnity: no leaves")
        self.dec = dec
        self.m = m
        self.config = config
        # The transition width in cube units is forced by the dilation
        # pair: the support must fill the dilate exactly.
        self.transition = Q(dec.dilate_num - dec.dilate_den, 2 * dec.dilate_den)
        bumps = [make_bump(m, self.transition)]
        for _ in range(m):
            bumps.append(bumps[-1].derivative())
        self.bumps: tuple[SmoothBump, ...] = tuple(bumps)
        self._supports = {
            q: q.dilate(dec.dilate_num, dec.dilate_den) for q in dec.leaves
        }
        # flat per-leaf records for the hot loops: cube, its own corner,
        # side, and the open support bounds where the bump is positive
        self._records = tuple(
            (q, q.lo, q.side, sup.lo, sup.hi)
            for q, sup in self._supports.items()
        )

    def support(self, leaf: DyadicCube) -> Box:
        return self._supports[leaf]

    def _tilde_values(self, pt: Point) -> list[tuple[DyadicCube, Rat]]:
        """Nonzero bump products at an already-converted point."""
        out = []
        for q, qlo, side, slo, shi in self._records:
            hit = True
            for v, a, b in zip(pt, slo, shi):
                if v <= a or v >= b:
                    hit = False
                    break
            if not hit:
                continue
            acc = ONE
            for v, l in zip(pt, qlo):
                acc *= self.bumps[0].eval((v - l) / side)
            if acc != 0:
                out.append((q, acc))
        return out

    def tilde(self, leaf: DyadicCube, x: Sequence[RatLike]) -> Rat:
        pt = as_point(x)
        sup = self._supports[leaf]
        if not all(l <= v <= h for l, v, h in zip(sup.lo, pt, sup.hi)):
            return ZERO
        acc = ONE
        delta = leaf.side
        for xv, lov in zip(pt, leaf.lo):
            v = self.bumps[0].eval((xv - lov) / delta)
            if v == 0:
                return ZERO
            acc *= v
        return acc

    def active(self, x: Sequence[RatLike]) -> tuple[DyadicCube, ...]:
        return tuple(q for q, _ in self._tilde_values(as_point(x)))

    def tilde_jet(self, leaf: DyadicCube, x: Sequence[RatLike], space: JetSpace) -> Jet:
        if space.m - 1 > self.m:
            raise PreconditionError("tilde_jet: jet order exceeds the cutoff smoothness")
        pt = as_point(x)
        if len(pt) != space.n:
            raise PreconditionError("tilde_jet: point dimension mismatch")
        delta = leaf.side
        per_axis = []
        for xv, lov in zip(pt, leaf.lo):
            t = (xv - lov) / delta
            per_axis.append([self.bumps[r].eval(t) / delta**r for r in range(space.m)])
        coeffs = []
        for beta in space.indices:
            acc = ONE
            for nu, b in enumerate(beta):
                acc *= per_axis[nu][b]
            coeffs.append(acc)
        return Jet(space, pt, tuple(coeffs))

    def G(self, x: Sequence[RatLike]) -> Rat:
        total = ZERO
        for _, w in self._tilde_values(as_point(x)):
            total += w * w
        return total

    def G_jet(self, x: Sequence[RatLike], space: JetSpace) -> Jet:
        pt = as_point(x)
        total = Jet.zero(space, pt)
        for q, _ in self._tilde_values(pt):
            tj = self.tilde_jet(q, pt, space)
            total = total + jet_multiply(tj, tj)
        return total

    def sum_theta_sq(self, x: Sequence[RatLike]) -> Rat:
        """Sum of the normalized squares, computed term by term."""
        values = self._tilde_values(as_point(x))
        G = ZERO
        for _, w in values:
            G += w * w
        if G == 0:
            raise PreconditionError("sum_theta_sq: point outside the covered region")
        total = ZERO
        for _, w in values:
            total += w * w / G
        return total

    def theta_sq(self, leaf: DyadicCube, x: Sequence[RatLike]) -> Rat:
        pt = as_point(x)
        G = self.G(pt)
        if G == 0:
            raise PreconditionError("theta_sq: point outside the covered region")
        w = self.tilde(leaf, pt)
        return w * w / G

    def theta(self, leaf: DyadicCube, x: Sequence[RatLike]) -> float:
        return math.sqrt(float(self.theta_sq(leaf, x)))

    def theta_sq_jet(self, leaf: DyadicCube, x: Sequence[RatLike], space: JetSpace) -> Jet:
        pt = as_point(x)
        Gj = self.G_jet(pt, space)
        if Gj.coeffs[0] == 0:
            raise PreconditionError("theta_sq_jet: point outside the covered region")
        tj = self.tilde_jet(leaf, pt, space)
        return jet_multiply(jet_multiply(tj, tj), jet_inverse(Gj))

    def theta_jet_float(
        self, leaf: DyadicCube, x: Sequence[RatLike], space: JetSpace
    ) -> tuple[float, ...]:
        """Float derivative values of theta itself, via the triangular
        square-root recurrence on the exact jet of theta squared."""
        sq = self.theta_sq_jet(leaf, x, space)
        zero_mi = (0,) * space.n
        if sq.coeff(zero_mi) == 0:
            return (0.0,) * space.dim
        vals: dict[MultiIndex, float] = {}
        for alpha in space.indices:
            if alpha == zero_mi:
                vals[alpha] = math.sqrt(float(sq.coeff(alpha)))
                continue
            acc = float(sq.coeff(alpha))
            for beta in space.indices:
                if beta == zero_mi or beta == alpha:
                    continue
                rest = mi_sub(alpha, beta)
                if rest is None:
                    continue
                acc -= mi_binomial(alpha, beta) * vals[beta] * vals[rest]
            vals[alpha] = acc / (2.0 * vals[zero_mi])
        return tuple(vals[a] for a in space.indices)

    def neighbors(self, leaf: DyadicCube) -> tuple[DyadicCube, ...]:
        sup = self._supports[leaf]
        return tuple(
            q
            for q in self.dec.leaves
            if q != leaf and self._supports[q].meets_closed(sup)
        )

    def theta_derivative_bounds(self, leaf: DyadicCube) -> dict[MultiIndex, Rat]:
        """Certified sup bounds on the covered region: the value at beta
        bounds |d^beta theta(leaf)| * side(leaf)^|beta|.

        Chain: per-axis coefficient-sum bounds for the bumps, a
        neighbor-count Leibniz bound for G, and the power-series descent
        for G^(-1/2) using G >= 1 wherever some leaf contains the point.
        """
        n = len(leaf.corner)
        idxs = enumerate_multiindices(self.m + 1, n)
        sup = [b.sup_bound() for b in self.bumps]

        def tensor(beta: MultiIndex) -> Rat:
            acc = ONE
            for b in beta:
                acc *= sup[b]
            return acc

        B = {beta: tensor(beta) for beta in idxs}
        nb = self.neighbors(leaf)
        ratio = ONE
        for q in nb:
            r = leaf.side / q.side
            if r > ratio:
                ratio = r
        T = {beta: B[beta] * ratio ** mi_order(beta) for beta in idxs}
        K = Q(1 + len(nb))

        def below(beta: MultiIndex):
            return itertools.product(*[range(b + 1) for b in beta])

        Gb: dict[MultiIndex, Rat] = {}
        for beta in idxs:
            total = ZERO
            for mu in below(beta):
                total += mi_binomial(beta, mu) * T[mu] * T[mi_sub(beta, mu)]
            Gb[beta] = K * total

        memo: dict[tuple[int, MultiIndex], Rat] = {}

        def Hb(r: int, beta: MultiIndex) -> Rat:
            if mi_order(beta) == 0:
                return ONE
            key = (r, beta)
            if key in memo:
                return memo[key]
            nu = next(i for i, b in enumerate(beta) if b > 0)
            e_nu = tuple(1 if i == nu else 0 for i in range(n))
            gamma = mi_sub(beta, e_nu)
            total = ZERO
            for mu in below(gamma):
                rest = mi_sub(gamma, mu)
                total += mi_binomial(gamma, mu) * Hb(r + 1, mu) * Gb[mi_add(rest, e_nu)]
            out = (Q(1, 2) + r) * total
            memo[key] = out
            return out

        bounds: dict[MultiIndex, Rat] = {}
        for beta in idxs:
            total = ZERO
            for mu in below(beta):
                total += mi_binomial(beta, mu) * B[mu] * Hb(0, mi_sub(beta, mu))
            bounds[beta] = total
        return bounds


def build_pou(
    dec: CZDecomposition,
    m: int,
    config: EngineConfig = DEFAULT_CONFIG,
) -> PartitionOfUnity:
    report = check_cz_geometry(dec)
    if not report.ok:
        raise PreconditionError(
            "build_pou: decomposition fails the geometry audit: "
            + report.violations[0]
        )
    return PartitionOfUnity(dec, m, config)


# ---------------------------------------------------------------------------
# Glued functions


@dataclass(frozen=True, eq=False)
class GluedFunction:
    """F = sum_Q theta_Q^2 F^Q over the leaves of a decomposition.

    Pieces are jets (read as their Taylor polynomials) or nested glued
    functions; values and jets at rational points are exact.  When an
    origin shift is present, callers work in their own frame and the
    shift is applied on entry.
    """

    space: JetSpace
    dec: CZDecomposition
    pou: PartitionOfUnity
    pieces: Mapping[DyadicCube, object]
    origin_shift: Point | None = None

    def __post_init__(self) -> None:
        if set(self.pieces) != set(self.dec.leaves):
            raise PreconditionError("GluedFunction: pieces must cover the leaves exactly")
        for piece in self.pieces.values():
            if isinstance(piece, Jet):
                if piece.space != self.space:
                    raise PreconditionError("GluedFunction: piece jet space mismatch")
            elif not isinstance(piece, GluedFunction):
                raise PreconditionError("GluedFunction: pieces must be jets or glued functions")
        if self.origin_shift is not None:
            object.__setattr__(self, "origin_shift", as_point(self.origin_shift))

    def _to_internal(self, y: Sequence[RatLike]) -> Point:
        pt = as_point(y)
        if len(pt) != self.space.n:
            raise PreconditionError("GluedFunction: point dimension mismatch")
        if self.origin_shift is None:
            return pt
        return tuple(a + b for a, b in zip(pt, self.origin_shift))

    def _piece_value(self, leaf: DyadicCube, x: Point) -> Rat:
        piece = self.pieces[leaf]
        if isinstance(piece, GluedFunction):
            return piece._value_internal(x)
        return eval_jet(piece, x)

    def _piece_jet(self, leaf: DyadicCube, x: Point, space: JetSpace) -> Jet:
        piece = self.pieces[leaf]
        if isinstance(piece, GluedFunction):
            return piece._jet_internal(x, space)
        return recenter_jet(piece, x)

    def _value_internal(self, x: Point) -> Rat:
        num = ZERO
        G = ZERO
        for q, w in self.pou._tilde_values(x):
            G += w * w
            num += w * w * self._piece_value(q, x)
        if G == 0:
            raise PreconditionError("GluedFunction: point outside the covered region")
        return num / G

    def __call__(self, y: Sequence[RatLike]) -> Rat:
        return self._value_internal(self._to_internal(y))

    def _jet_internal(self, x: Point, space: JetSpace) -> Jet:
        values = self.pou._tilde_values(x)
        if not values:
            raise PreconditionError("GluedFunction: point outside the covered region")
        Gj = Jet.zero(space, x)
        squares = []
        for q, _ in values:
            tj = self.pou.tilde_jet(q, x, space)
            sq = jet_multiply(tj, tj)
            squares.append((q, sq))
            Gj = Gj + sq
        inv = jet_inverse(Gj)
        total = Jet.zero(space, x)
        for q, sq in squares:
            weight = jet_multiply(sq, inv)
            total = total + jet_multiply(weight, self._piece_jet(q, x, space))
        return total

    def jet_at(self, y: Sequence[RatLike], space: JetSpace | None = None) -> Jet:
        sp = space if space is not None else self.space
        if sp.m - 1 > self.pou.m:
            raise PreconditionError("jet_at: order exceeds the cutoff smoothness")
        inner = self._jet_internal(self._to_internal(y), sp)
        return Jet(sp, as_point(y), inner.coeffs)


def whitney_extend(
    field: WhitneyField,
    dec: CZDecomposition,
    P0_far: Jet,
    config: EngineConfig = DEFAULT_CONFIG,
) -> GluedFunction:
    """Glue per-leaf polynomials read off a Whitney field.

    Each leaf takes the field's jet at the nearest data point seen by
    its outer dilate (falling back to the parent's dilate for deep empty
    leaves) and P0_far when no point is anywhere near.  At a data point
    every active leaf sees that point, so the glued jets reproduce the
    field exactly there.
    """
    space = field.space
    if P0_far.space != space:
        raise PreconditionError("whitney_extend: P0_far space mismatch")
    if dec.predicate_tag != "simplified":
        raise PreconditionError("whitney_extend: expected a simplified-predicate decomposition")
    root_box = dec.root.box()
    for p in field.points:
        if not root_box.contains_point(p):
            raise PreconditionError("whitney_extend: data point outside the root cube")

    pts = field.points
    pieces: dict[DyadicCube, Jet] = {}
    for leaf in dec.leaves:
        box5 = leaf.dilate(dec.outer)
        near = [p for p in pts if box5.contains_point(p)]
        if not near and leaf.side <= config.type3_threshold * dec.root.side:
            box5p = leaf.parent.dilate(dec.outer)
            near = [p for p in pts if box5p.contains_point(p)]
        if near:
            center = leaf.center
            y = min(near, key=lambda p: (dist2(center, p), p))
            pieces[leaf] = field.jet(y)
        else:
            pieces[leaf] = P0_far
    pou = build_pou(dec, space.m, config)
    return GluedFunction(space, dec, pou, pieces)


# ---------------------------------------------------------------------------
# End-to-end pipeline


@dataclass(frozen=True)
class SelectionResult:
    F: GluedFunction
    M0: Rat
    M_full: Rat
    ratio: Rat | None
    functional_subset: tuple[Point, ...]
    k: int
    geometry: CZGeometryReport
    checks: tuple[str, ...]
    method: str = "direct"


def _minimal_infeasible(
    problem: SelectionProblem, config: EngineConfig
) -> InfeasibleProblemError:
    """Smallest (by size, then lexicographic) infeasible subset."""
    pts = sorted(problem.E)
    spent = 0
    for size in range(1, len(pts) + 1):
        for S in itertools.combinations(pts, size):
            spent += 1
            if spent > config.subset_budget:
                raise SizeBudgetError("select: infeasible-subset search budget exhausted")
            try:
                min_whitney_M(S, problem.constraints, problem.space, config)
            except InfeasibleProblemError:
                return InfeasibleProblemError(
                    f"select: constraints are infeasible; a minimal infeasible "
                    f"subset has {size} point(s)",
                    subset=S,
                )
    return InfeasibleProblemError(
        "select: constraint system infeasible", subset=tuple(pts)
    )


def _shifted_frame(
    E: Sequence[Point],
    space: JetSpace,
    config: EngineConfig,
) -> tuple[Point, tuple[Point, ...], DyadicCube]:
    """Integer translation making all coordinates nonnegative, the
    translated points, and their smallest enclosing dyadic cube."""
    los = [min(p[nu] for p in E) for nu in range(space.n)]
    his = [max(p[nu] for p in E) for nu in range(space.n)]
    shift = tuple(Q(max(0, -rfloor(l))) for l in los)
    lo_s = [l + s for l, s in zip(los, shift)]
    hi_s = [h + s for h, s in zip(his, shift)]
    root = enclosing_dyadic(lo_s, hi_s, config)
    shifted = tuple(tuple(v + s for v, s in zip(p, shift)) for p in E)
    return shift, shifted, root


def select(
    problem: SelectionProblem,
    k: int | None = None,
    config: EngineConfig = DEFAULT_CONFIG,
) -> SelectionResult:
    """Guaranteed pipeline: subset functional, global witness field,
    decomposition, gluing, and exact verification at the data points.

    The returned ratio M_full / M0 is the empirically observed constant
    between the depth-k functional and the full problem.
    """
    if problem.target_dim != 1:
        raise PreconditionError("select: vector targets go through lift_problem first")
    space = problem.space
    E = sorted(problem.E)
    if not E:
        raise PreconditionError("select: E is empty")
    k_eff = len(E) if k is None else k
    if k_eff < 1:
        raise PreconditionError("select: k must be >= 1")

    try:
        M_full, wfield = min_whitney_M(E, problem.constraints, space, config)
    except InfeasibleProblemError:
        raise _minimal_infeasible(problem, config) from None
    M0, S0 = finiteness_functional(problem, k_eff, config)

    shift, E_s, root = _shifted_frame(E, space, config)
    dec = cz_decompose(root, E_s, "simplified", config)
    geometry = check_cz_geometry(dec)
    if not geometry.ok:
        raise VerificationError(
            "select: decomposition failed the geometry audit: " + geometry.violations[0]
        )

    wfield_s = WhitneyField(
        space,
        {
            ps: Jet(space, ps, wfield.jet(p).coeffs)
            for p, ps in zip(E, E_s)
        },
    )
    center = root.center
    anchor = min(E_s, key=lambda p: (dist2(center, p), p))
    glued = whitney_extend(wfield_s, dec, wfield_s.jet(anchor), config)
    F = GluedFunction(
        space,
        dec,
        glued.pou,
        glued.pieces,
        origin_shift=shift if any(s != 0 for s in shift) else None,
    )

    checks: list[str] = []
    for z in E:
        jz = F.jet_at(z)
        if jz.coeffs != wfield.jet(z).coeffs:
            raise VerificationError(
                f"select: glued jet at {z} deviates from the witness field"
            )
        if not jet_in_gamma(jz, problem.constraints[z], M_full):
            raise VerificationError(f"select: constraints violated at {z}")
    checks.append(f"jets reproduced exactly at {len(E)} data point(s)")
    checks.append(f"constraint membership verified at M = {qstr(M_full)}")

    ratio = (M_full / M0) if M0 > 0 else None
    return SelectionResult(
        F, M0, M_full, ratio, S0, k_eff, geometry, tuple(checks)
    )


def achieved_norm(F: GluedFunction, grid_density: int) -> dict[MultiIndex, float]:
    """Per-derivative suprema of |d^beta F| over a uniform grid on the
    root cube (exact evaluation, float output)."""
    if grid_density < 2:
        raise PreconditionError("achieved_norm: grid_density must be >= 2")
    space = F.space
    shift = F.origin_shift or (ZERO,) * space.n
    lo = [v - s for v, s in zip(F.dec.root.lo, shift)]
    hi = [v - s for v, s in zip(F.dec.root.hi, shift)]
    axes = [
        [lo[nu] + (hi[nu] - lo[nu]) * Q(i, grid_density - 1) for i in range(grid_density)]
        for nu in range(space.n)
    ]
    out = {beta: 0.0 for beta in space.indices}
    for pt in itertools.product(*axes):
        jet = F.jet_at(pt)
        for beta, v in zip(space.indices, jet.coeffs):
            mag = abs(float(v))
            if mag > out[beta]:
                out[beta] = mag
    return out


# ---------------------------------------------------------------------------
# Lift for vector-valued targets


def lift_problem(
    problem: SelectionProblem,
    config: EngineConfig = DEFAULT_CONFIG,
) -> ShapeField:
    """Turn a D_t-valued problem over R^n into a scalar shape field over
    R^(n + D_t): at each lifted point (x, 0) the value is pinned to 0,
    the xi-gradient must lie in K(x), and every derivative up to the
    raised order is box-bounded by M.

    Constraints must bind the component values only; rows touching other
    jet coefficients have no lifted counterpart and are rejected.
    """
    space = problem.space
    D_t = problem.target_dim
    lifted = JetSpace(space.m + 1, space.n + D_t)
    if lifted.dim > config.lift_dim_cap:
        raise SizeBudgetError(
            f"lift_problem: lifted jet dimension {lifted.dim} exceeds the cap "
            f"{config.lift_dim_cap}"
        )
    pos0 = space.position[(0,) * space.n]
    value_positions = [i * space.dim + pos0 for i in range(D_t)]

    def xi_index(i: int) -> MultiIndex:
        return (0,) * space.n + tuple(1 if j == i else 0 for j in range(D_t))

    gradient_positions = [lifted.position[xi_index(i)] for i in range(D_t)]
    zero_position = lifted.position[(0,) * lifted.n]

    entries: dict[tuple, list[tuple]] = {}
    for x in problem.E:
        rows: list[tuple] = []
        for a, b, c in problem.constraints[x].rows:
            for pos, coeff in enumerate(a):
                if coeff != 0 and pos not in value_positions:
                    raise PreconditionError(
                        "lift_problem: constraints must bind function values only"
                    )
            arow = [ZERO] * lifted.dim
            for i, vp in enumerate(value_positions):
                arow[gradient_positions[i]] = a[vp]
            rows.append((tuple(arow), b, c))
        for sign in (ONE, -ONE):
            pin = [ZERO] * lifted.dim
            pin[zero_position] = sign
            rows.append((tuple(pin), ZERO, ZERO))
        for idx in lifted.indices:
            for sign in (ONE, -ONE):
                box = [ZERO] * lifted.dim
                box[lifted.position[idx]] = sign
                rows.append((tuple(box), ZERO, ONE))
        entries[x + (ZERO,) * D_t] = rows
    return field_from_rows(lifted, entries)


def lifted_jet_from_components(
    lifted_space: JetSpace,
    x0: Sequence[RatLike],
    jets: Sequence[Jet],
) -> Jet:
    """The jet of sum_i xi_i * P_i(x) at (x0, 0)."""
    D_t = len(jets)
    if D_t < 1:
        raise PreconditionError("lifted_jet_from_components: no components")
    n = lifted_space.n - D_t
    if n < 1:
        raise PreconditionError("lifted_jet_from_components: dimension mismatch")
    base = as_point(x0)
    values: dict[MultiIndex, Rat] = {}
    for i, P in enumerate(jets):
        if P.space.n != n or P.space.m != lifted_space.m - 1:
            raise PreconditionError("lifted_jet_from_components: component space mismatch")
        if P.base != base:
            raise PreconditionError("lifted_jet_from_components: component base mismatch")
        tail = tuple(1 if j == i else 0 for j in range(D_t))
        for alpha in P.space.indices:
            values[alpha + tail] = P.coeff(alpha)
    return Jet.from_map(lifted_space, base + (ZERO,) * D_t, values)


# ---------------------------------------------------------------------------
# Experimental recursive solver


@dataclass
class _RecursiveContext:
    space: JetSpace
    E: tuple[Point, ...]
    chain: list[ShapeField]
    M0: Rat
    eps: Rat
    big_a: Rat
    config: EngineConfig
    budget: list
    checks: list


_DESCENT_ERRORS = (
    PreconditionError,
    VerificationError,
    IllConditionedError,
    ThresholdAmbiguousError,
    InfeasibleProblemError,
)


def _labels_below(
    A: frozenset, space: JetSpace, config: EngineConfig
) -> list[frozenset]:
    idxs = space.indices
    if 2 ** len(idxs) > config.subset_budget:
        raise SizeBudgetError("recursive_select: label search space too large")
    out = []
    for r in range(len(idxs) + 1):
        for combo in itertools.combinations(idxs, r):
            S = frozenset(combo)
            if S != A and subset_less(S, A):
                out.append(S)
    out.sort(key=lambda S: (len(S), sorted(multiindex_key(a) for a in S)))
    return out


def _vanishes_on(diff: Jet, Ahat: frozenset, space: JetSpace) -> bool:
    """d^beta(diff) identically zero for every beta in Ahat."""
    for beta in Ahat:
        for gamma in space.indices:
            if all(g >= b for g, b in zip(gamma, beta)) and diff.coeff(gamma) != 0:
                return False
    return True


def _weak_basis(
    field: ShapeField,
    y: Point,
    M0: Rat,
    P_hat: Jet,
    Ahat: frozenset,
    delta: Rat,
    CB: Rat,
    config: EngineConfig,
) -> dict[MultiIndex, Jet] | None:
    """One-shot LP for a weak basis at (y, M0, P_hat): Kronecker rows,
    one-sided growth rows, membership of both signed perturbations."""
    space = field.space
    labels = sorted(Ahat, key=multiindex_key)
    if not labels:
        return {}
    D = space.dim
    gamma_poly = field.gamma(y)
    level = CB * M0
    rows: list[tuple[tuple[Rat, ...], Rat]] = []
    num_vars = len(labels) * D

    for ai, alpha in enumerate(labels):
        offset = ai * D
        for beta in labels:
            target = ONE if beta == alpha else ZERO
            for sign in (ONE, -ONE):
                vec = [ZERO] * num_vars
                vec[offset + space.position[beta]] = sign
                rows.append((tuple(vec), sign * target))
        for beta in space.indices:
            if not multiindex_leq(alpha, beta):
                continue
            bound = CB * delta ** (mi_order(alpha) - mi_order(beta))
            for sign in (ONE, -ONE):
                vec = [ZERO] * num_vars
                vec[offset + space.position[beta]] = sign
                rows.append((tuple(vec), bound))
        step = M0 * delta ** (space.m - mi_order(alpha)) / CB
        for a, b, c in gamma_poly.rows:
            slack = b + level * c - sum(av * pv for av, pv in zip(a, P_hat.coeffs))
            for sign in (ONE, -ONE):
                vec = [ZERO] * num_vars
                for pos, av in enumerate(a):
                    if av != 0:
                        vec[offset + pos] = sign * step * av
                rows.append((tuple(vec), slack))

    res = solve_lp_rows(rows, num_vars)
    if not res.feasible:
        return None
    w = res.witness
    return {
        alpha: Jet(space, y, tuple(w[ai * D : (ai + 1) * D]))
        for ai, alpha in enumerate(labels)
    }


def _with_delta(
    cert: BasisCertificate,
    new_delta: Rat,
    field: ShapeField,
    config: EngineConfig,
) -> BasisCertificate:
    """Shrink a certificate's length scale; the convexity of the shapes
    keeps memberships valid and a bounded constant bump absorbs the
    growth-side change."""
    if new_delta == cert.delta:
        return cert
    if new_delta > cert.delta:
        raise PreconditionError("certificate rescaling only shrinks the length scale")
    ratio = cert.delta / new_delta
    CB = cert.CB * ratio ** (cert.space.m - 1)
    for _ in range(config.cb_escalation_steps + 1):
        cand = BasisCertificate(
            cert.A, cert.x0, cert.M0, cert.P0, new_delta, CB, cert.basis, weak=cert.weak
        )
        if not verify_basis_report(cand, field):
            return cand
        CB = CB * 2
    raise VerificationError(
        "recursive_select: certificate does not survive the scale change"
    )


def _membership_constant(
    ctx: _RecursiveContext, jet: Jet, z: Point, tag: str
) -> Rat:
    """Least escalation constant at which the jet joins the base shape."""
    gamma = ctx.chain[0].gamma(z)
    C = Q(ctx.config.cb_prime_factor)
    for _ in range(ctx.config.cb_escalation_steps + 1):
        if jet_in_gamma(jet, gamma, C * ctx.M0):
            return C
        C = C * 2
    raise VerificationError(
        f"recursive_select: {tag}: jet at {z} escapes the base shape at the "
        f"escalation cap"
    )


def _verify_c2(ctx: _RecursiveContext, F: GluedFunction, cube: DyadicCube) -> Rat:
    region = cube.dilate(ctx.config.dilate_num, ctx.config.dilate_den)
    worst = ZERO
    single = len(F.pieces) == 1
    for z in ctx.E:
        if not region.contains_point(z):
            continue
        if single:
            piece = next(iter(F.pieces.values()))
            jz = recenter_jet(piece, z)
        else:
            jz = F._jet_internal(z, ctx.space)
        C = _membership_constant(ctx, jz, z, "conclusion at a data point")
        if C > worst:
            worst = C
    return worst


def _base_case(
    ctx: _RecursiveContext, cert: BasisCertificate, cube: DyadicCube
) -> GluedFunction:
    dec = CZDecomposition(
        cube,
        (cube,),
        "single",
        ctx.config.dilate_num,
        ctx.config.dilate_den,
        ctx.config.outer_factor,
    )
    # One bump normalized by itself: the coverage audit does not apply.
    pou = PartitionOfUnity(dec, ctx.space.m, ctx.config)
    F = GluedFunction(ctx.space, dec, pou, {cube: cert.P0})
    worst = _verify_c2(ctx, F, cube)
    if worst > 0:
        ctx.checks.append(f"base case at level {cube.level}: constant {qstr(worst)}")
    return F


def _main_lemma(
    ctx: _RecursiveContext,
    A: frozenset,
    cert: BasisCertificate,
    cube: DyadicCube,
) -> GluedFunction:
    ctx.budget[0] -= 1
    if ctx.budget[0] < 0:
        raise SizeBudgetError("recursive_select: recursion node budget exhausted")
    space = ctx.space
    if A == space.index_set():
        return _base_case(ctx, cert, cube)

    lA = label_depth(A, space, ctx.config)
    field_cur = ctx.chain[lA]
    field_prev = ctx.chain[lA - 1]
    field_weak = ctx.chain[lA - 3]
    candidates = _labels_below(A, space, ctx.config)
    cache: dict[DyadicCube, dict] = {}
    outer = ctx.config.outer_factor

    def points_near(q: DyadicCube) -> list[Point]:
        box5 = q.dilate(outer)
        return [p for p in ctx.E if box5.contains_point(p)]

    def descends(q: DyadicCube) -> bool:
        near = points_near(q)
        if len(near) <= 1:
            return True
        data: dict[Point, tuple] = {}
        for y in near:
            try:
                _, outA, _ = transport(
                    cert, cert, y, field_cur, field_prev, config=ctx.config
                )
            except _DESCENT_ERRORS:
                return False
            P_hat = outA.P0
            diff = recenter_jet(P_hat, cert.x0) - cert.P0
            for beta in space.indices:
                bound = ctx.big_a * ctx.M0 * cert.delta ** (space.m - mi_order(beta))
                if abs(diff.coeff(beta)) > bound:
                    return False
            CB_w = max(ctx.big_a, outA.CB)
            found = None
            for Ahat in candidates:
                if not _vanishes_on(diff, Ahat, space):
                    continue
                basis = _weak_basis(
                    field_weak, y, ctx.M0, P_hat, Ahat, cert.delta, CB_w, ctx.config
                )
                if basis is not None:
                    found = (Ahat, basis, CB_w)
                    break
            if found is None:
                return False
            data[y] = (P_hat, *found)
        cache[q] = data
        return True

    dec = cz_decompose(cube, ctx.E, descends, ctx.config)
    geometry = check_cz_geometry(dec)
    if not geometry.ok:
        raise VerificationError(
            "recursive_select: geometry audit failed: " + geometry.violations[0]
        )

    pieces: dict[DyadicCube, object] = {}
    for leaf in dec.leaves:
        near = points_near(leaf)
        if len(near) >= 2:
            y_q = min(near)
            P_hat, Ahat, wbasis, CB_w = cache[leaf][y_q]
            cert_w = BasisCertificate(
                Ahat, y_q, ctx.M0, P_hat, cert.delta, CB_w, wbasis, weak=True
            )
            mono, cert1 = relabel(cert_w, field_weak, ctx.config)
            A1 = frozenset(mono.members)
            if A1 == A or not subset_less(A1, A):
                raise VerificationError(
                    "recursive_select: label descent stalled at a populated cube"
                )
            l1 = label_depth(A1, space, ctx.config)
            cert_child = _with_delta(
                cert1, leaf.side / ctx.eps, ctx.chain[l1], ctx.config
            )
            pieces[leaf] = _main_lemma(ctx, A1, cert_child, leaf)
        elif len(near) == 1 or leaf.side <= ctx.config.type3_threshold * cube.side:
            if near:
                y_q = near[0]
            else:
                plus = [
                    p
                    for p in ctx.E
                    if leaf.parent.dilate(outer).contains_point(p)
                ]
                if not plus:
                    raise VerificationError(
                        "recursive_select: a deep empty cube has no anchor point"
                    )
                y_q = min(plus)
            try:
                _, outA, _ = transport(
                    cert, cert, y_q, field_cur, field_prev, config=ctx.config
                )
            except _DESCENT_ERRORS as exc:
                raise VerificationError(
                    f"recursive_select: auxiliary jet construction failed: {exc}"
                ) from exc
            pieces[leaf] = outA.P0
        else:
            pieces[leaf] = cert.P0

    pou = build_pou(dec, space.m, ctx.config)
    F = GluedFunction(space, dec, pou, pieces)
    worst = _verify_c2(ctx, F, cube)
    ctx.checks.append(
        f"glued level {cube.level} (depth {lA}): membership constant {qstr(worst)}"
        if worst > 0
        else f"glued level {cube.level} (depth {lA}): no data points in range"
    )
    return F


def recursive_select(
    problem: SelectionProblem,
    eps: RatLike | None = None,
    A_const: RatLike | None = None,
    config: EngineConfig = DEFAULT_CONFIG,
) -> SelectionResult:
    """Experimental label-descent solver.

    Starts from the empty label with a verified base-jet certificate,
    decomposes with the transport-driven admissibility rule, recurses on
    strictly smaller monotonic labels obtained from relabel, and glues.
    Every certificate is post-verified; any failed check aborts with the
    failing stage named rather than returning an unverified function.
    """
    if problem.target_dim != 1:
        raise PreconditionError("recursive_select: scalar targets only; lift first")
    space = problem.space
    eps_q = Q(eps) if eps is not None else config.recursive_eps
    big_a = Q(A_const) if A_const is not None else config.recursive_A
    if not 0 < eps_q < 1:
        raise PreconditionError("recursive_select: eps must lie in (0, 1)")
    if big_a <= 0:
        raise PreconditionError("recursive_select: A_const must be positive")

    E = sorted(problem.E)
    if not E:
        raise PreconditionError("recursive_select: E is empty")
    try:
        M_full, wfield = min_whitney_M(E, problem.constraints, space, config)
    except InfeasibleProblemError:
        raise _minimal_infeasible(problem, config) from None

    shift, E_s, root = _shifted_frame(E, space, config)
    constraints_s = {ps: problem.constraints[p] for p, ps in zip(E, E_s)}
    problem_s = SelectionProblem(space, E_s, constraints_s, 1)
    base_field = field_from_problem(problem_s)
    depth = label_depth(frozenset(), space, config)
    chain = refinement_chain(base_field, depth, config)

    coeff_mag = ZERO
    for p in E:
        for v in wfield.jet(p).coeffs:
            if abs(v) > coeff_mag:
                coeff_mag = abs(v)
    M0 = max(M_full, coeff_mag, ONE)

    x0 = E_s[0]
    P0 = Jet(space, x0, wfield.jet(E[0]).coeffs)
    delta0 = root.side / eps_q

    CB = Q(config.cb_prime_factor)
    cert0 = None
    for _ in range(config.cb_escalation_steps + 1):
        cand = BasisCertificate(frozenset(), x0, M0, P0, delta0, CB, {}, weak=False)
        if not verify_basis_report(cand, chain[depth]):
            cert0 = cand
            break
        CB = CB * 2
    if cert0 is None:
        raise VerificationError(
            "recursive_select: the witness jet is rejected by the refined shapes "
            "at the escalation cap"
        )

    ctx = _RecursiveContext(
        space,
        E_s,
        chain,
        M0,
        eps_q,
        big_a,
        config,
        [config.recursion_node_budget],
        [f"entry certificate constant {qstr(cert0.CB)}"],
    )
    F_int = _main_lemma(ctx, frozenset(), cert0, root)
    F = GluedFunction(
        space,
        F_int.dec,
        F_int.pou,
        F_int.pieces,
        origin_shift=shift if any(s != 0 for s in shift) else None,
    )

    worst = ZERO
    for z in E:
        jz = F.jet_at(z)
        zs = tuple(v + s for v, s in zip(z, shift))
        gamma = ctx.chain[0].gamma(zs)
        C = Q(config.cb_prime_factor)
        placed = False
        for _ in range(config.cb_escalation_steps + 1):
            if jet_in_gamma(Jet(space, zs, jz.coeffs), gamma, C * M0):
                placed = True
                break
            C = C * 2
        if not placed:
            raise VerificationError(
                f"recursive_select: final jet at {z} escapes the base shape"
            )
        if not jet_in_gamma(jz, problem.constraints[z], C * M0):
            raise VerificationError(
                f"recursive_select: final jet at {z} violates the constraints"
            )
        if C > worst:
            worst = C
    ctx.checks.append(f"final data-point membership constant {qstr(worst)}")

    geometry = check_cz_geometry(F.dec)
    return SelectionResult(
        F,
        M0,
        M_full,
        None,
        (),
        0,
        geometry,
        tuple(ctx.checks),
        method="recursive",
    )
