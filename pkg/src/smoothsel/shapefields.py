"""Shape fields and the constructive basis machinery.

A shape field assigns to each point x of a finite set E a family of
convex sets Gamma(x, M) of jets, monotone in the scale parameter M.
Here every Gamma(x, M) is a parametric polyhedron over the jet's
derivative values at x, with rows a.v <= b + M c, c >= 0.

The refinement operation shrinks each Gamma(x, M) to the jets that
admit compatible witnesses at every other point of E; iterating it
drives the finiteness results in the finiteness module. The second
half of this file implements the constructive procedures on polynomial
bases (rescale, relabel, control_gamma, transport) with exact rational
arithmetic and post-verification of every produced certificate.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import (
    IllConditionedError,
    PreconditionError,
    SearchExhaustedError,
    ThresholdAmbiguousError,
    VerificationError,
)
from .exactq import ONE, Q, Rat, RatLike, ZERO, qstr
from .jets import (
    Jet,
    JetSpace,
    MonotonicSet,
    MultiIndex,
    eval_jet_derivative,
    is_monotonic,
    jet_inverse,
    jet_multiply,
    jet_one,
    mi_factorial,
    mi_order,
    mi_sub,
    monotonic_span,
    multiindex_key,
    multiindex_leq,
    recenter_jet,
    recenter_matrix,
    subset_less,
    taylor_monomial,
)
from .linalg import invert_matrix, solve_linear_system
from .metrics import as_point, dist2, dist_power
from .polyhedra import (
    ParamPolyhedron,
    intersect,
    lp_solve,
    minkowski_box_sum,
    prune_all_m,
    solve_lp_rows,
)

Point = tuple[Rat, ...]


# ---------------------------------------------------------------------------
# Shape fields


@dataclass(frozen=True)
class ShapeField:
    """Finite family x -> Gamma(x, M) of parametric polyhedra over jets.

    points are distinct rational points; gammas is aligned with points.
    Every gamma constrains the owning point's jet coefficients
    (derivative values, in space.indices order) and must have c >= 0 in
    every row so that M' <= M implies Gamma(x, M') <= Gamma(x, M).
    """

    space: JetSpace
    points: tuple[Point, ...]
    gammas: tuple[ParamPolyhedron, ...]

    def __post_init__(self) -> None:
        pts = tuple(as_point(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(set(pts)) != len(pts):
            raise PreconditionError("ShapeField: duplicate points in E")
        if len(self.gammas) != len(pts):
            raise PreconditionError("ShapeField: points/gammas length mismatch")
        for x, gamma in zip(pts, self.gammas):
            if len(x) != self.space.n:
                raise PreconditionError("ShapeField: point dimension mismatch")
            if gamma.num_vars != self.space.dim:
                raise PreconditionError("ShapeField: gamma variable count mismatch")
            if not gamma.monotone_in_M:
                raise PreconditionError("ShapeField: gamma has a row with c < 0")
            expected = expected_labels(x, self.space)
            if gamma.var_labels != expected:
                raise PreconditionError("ShapeField: gamma labels must be ((x, beta), ...)")

    def gamma(self, x: Sequence[RatLike]) -> ParamPolyhedron:
        key = as_point(x)
        for p, g in zip(self.points, self.gammas):
            if p == key:
                return g
        raise PreconditionError(f"ShapeField: point {key} not in E")

    def has_point(self, x: Sequence[RatLike]) -> bool:
        return as_point(x) in self.points

    def with_gammas(self, gammas: Sequence[ParamPolyhedron]) -> "ShapeField":
        return ShapeField(self.space, self.points, tuple(gammas))


def expected_labels(x: Sequence[RatLike], space: JetSpace) -> tuple:
    pt = as_point(x)
    return tuple((pt, beta) for beta in space.indices)


def field_from_rows(
    space: JetSpace,
    entries: Mapping[tuple, Sequence[tuple]],
) -> ShapeField:
    """Build a ShapeField from {point: [(a, b, c), ...]} row listings."""
    points = tuple(as_point(p) for p in entries)
    gammas = []
    for p in points:
        rows = tuple(
            (tuple(Q(v) for v in a), Q(b), Q(c)) for a, b, c in entries[p]
        )
        gammas.append(ParamPolyhedron(space.dim, rows, expected_labels(p, space)))
    return ShapeField(space, points, tuple(gammas))


def jet_in_gamma(P: Jet, gamma: ParamPolyhedron, M: RatLike) -> bool:
    return gamma.contains(P.coeffs, M)


def singleton_gamma(space: JetSpace, x: Sequence[RatLike], P: Jet) -> ParamPolyhedron:
    """The one-point set {P} as equality rows, constant in M."""
    rows = []
    for j, beta in enumerate(space.indices):
        unit = [ZERO] * space.dim
        unit[j] = ONE
        v = Q(P.coeff(beta))
        rows.append((tuple(unit), v, ZERO))
        rows.append((tuple(-u for u in unit), -v, ZERO))
    return ParamPolyhedron(space.dim, tuple(rows), expected_labels(x, space))


def box_gamma(space: JetSpace, x: Sequence[RatLike], scale: RatLike = 1) -> ParamPolyhedron:
    """All jets with |coeff_beta| <= scale * M: the canonical full field."""
    s = Q(scale)
    rows = []
    for j in range(space.dim):
        unit = [ZERO] * space.dim
        unit[j] = ONE
        rows.append((tuple(unit), ZERO, s))
        rows.append((tuple(-u for u in unit), ZERO, s))
    return ParamPolyhedron(space.dim, tuple(rows), expected_labels(x, space))


# ---------------------------------------------------------------------------
# Refinement


def _transported_gamma(
    field: ShapeField,
    y: Point,
    x: Point,
    config: EngineConfig,
) -> ParamPolyhedron:
    """Jets at x admitting a witness in Gamma(y, M) within the distance box.

    The witness box |d^beta (P# - P)(x)| <= M |x-y|^{m-|beta|} becomes a
    Minkowski sum once Gamma(y, M)'s rows are rewritten over derivative
    values at x. Irrational |x-y| powers are replaced by their lower
    enclosure, shrinking the box: the output is a certified subset.
    """
    space = field.space
    gamma_y = field.gamma(y)
    R = recenter_matrix(space, x, y)
    rows = []
    for a, b, c in gamma_y.rows:
        transported = tuple(
            sum((a[i] * R[i][j] for i in range(space.dim)), ZERO)
            for j in range(space.dim)
        )
        rows.append((transported, b, c))
    shifted = ParamPolyhedron(space.dim, tuple(rows), expected_labels(x, space))
    radii = {
        beta: (ZERO, dist_power(x, y, space.m - mi_order(beta), side="lo", config=config))
        for beta in space.indices
    }
    return minkowski_box_sum(shifted, radii, config)


def first_refinement(field: ShapeField, config: EngineConfig = DEFAULT_CONFIG) -> ShapeField:
    """Shrink each Gamma(x, M) to the jets with witnesses at every y.

    The y = x term contributes Gamma(x, M) itself, so the output is
    always contained in the input.
    """
    new_gammas = []
    for x in field.points:
        pieces = [field.gamma(x)]
        for y in field.points:
            if y == x:
                continue
            pieces.append(_transported_gamma(field, y, x, config))
        merged = intersect(pieces)
        if len(merged.rows) > config.fm_prune_trigger:
            merged = prune_all_m(merged)
        new_gammas.append(merged)
    return field.with_gammas(new_gammas)


def refine(field: ShapeField, l: int, config: EngineConfig = DEFAULT_CONFIG) -> ShapeField:
    if l < 0:
        raise PreconditionError("refine: l must be nonnegative")
    out = field
    for _ in range(l):
        out = first_refinement(out, config)
    return out


def refinement_witness(
    field: ShapeField,
    P_sharp: Jet,
    y: Sequence[RatLike],
    M: RatLike,
    config: EngineConfig = DEFAULT_CONFIG,
    radius_scale: RatLike = 1,
    radius_side: str = "hi",
    objective: Sequence[RatLike] | None = None,
) -> Jet | None:
    """A jet P in Gamma(y, M) with |d^beta (P# - P)(x)| <= rs*M|x-y|^{m-|b|}.

    Solves the feasibility LP directly from the definition; the box is
    centered at P_sharp's derivatives at its own base point x.  An
    optional objective (over the y-frame coefficients) picks a
    particular vertex of the same feasible set; it never changes
    feasibility.
    """
    space = field.space
    x = P_sharp.base
    ypt = as_point(y)
    gamma_y = field.gamma(ypt)
    Mv = Q(M)
    rs = Q(radius_scale)
    rows = list(gamma_y.rows_at(Mv))
    R = recenter_matrix(space, ypt, x)
    for i, beta in enumerate(space.indices):
        # (R u)_beta is d^beta P(x) for a jet with y-frame coefficients u.
        coeffs = tuple(R[i][j] for j in range(space.dim))
        target = Q(P_sharp.coeff(beta))
        radius = rs * Mv * dist_power(
            x, ypt, space.m - mi_order(beta), side=radius_side, config=config
        )
        rows.append((coeffs, target + radius))
        rows.append((tuple(-cf for cf in coeffs), radius - target))
    res = solve_lp_rows(rows, space.dim, objective)
    if not res.feasible or res.witness is None:
        return None
    return Jet(space, ypt, tuple(res.witness))


# ---------------------------------------------------------------------------
# Convexity sampling


@dataclass(frozen=True)
class ConvexityReport:
    trials: int
    checked: int
    violations: tuple[dict, ...]
    notes: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _random_rational(rng: random.Random, scale: int = 4) -> Rat:
    return Q(rng.randint(-scale * 8, scale * 8), 8)


def _wsf_pair(space: JetSpace, x: Point, delta: Rat, rng: random.Random) -> tuple[Jet, Jet] | None:
    """Jets Q1, Q2 with Q1 (.) Q1 + Q2 (.) Q2 = 1 exactly and the
    derivative bounds |d^beta Q_i(x)| <= delta^{-|beta|}.

    Built from the rational circle parameterization through a free jet
    T: Q1 = (1 - T^2)/(1 + T^2), Q2 = 2T/(1 + T^2), all products
    truncated at x. Truncated multiplication is associative, so the
    identity survives truncation exactly.
    """
    T = Jet.from_map(
        space, x, {beta: _random_rational(rng, 2) for beta in space.indices}
    )
    one = jet_one(space, x)
    for _ in range(80):
        T2 = jet_multiply(T, T, x)
        denom_inv = jet_inverse(one + T2)
        Q1 = jet_multiply(one - T2, denom_inv, x)
        Q2 = jet_multiply(T + T, denom_inv, x)
        ok = True
        for beta in space.indices:
            bound = delta ** (-mi_order(beta))
            if abs(Q1.coeff(beta)) > bound or abs(Q2.coeff(beta)) > bound:
                ok = False
                break
        if ok:
            check = jet_multiply(Q1, Q1, x) + jet_multiply(Q2, Q2, x)
            assert check == one, "circle identity must be exact"
            return Q1, Q2
        T = T.scale(Q(1, 2))
    return None


def _gamma_vertex(gamma: ParamPolyhedron, M: Rat, rng: random.Random, space: JetSpace) -> Jet | None:
    objective = [Q(rng.choice([-3, -2, -1, 1, 2, 3])) for _ in range(space.dim)]
    res = lp_solve(gamma, M, objective)
    if not res.feasible:
        return None
    base = gamma.var_labels[0][0]
    return Jet(space, base, tuple(res.witness))


def sample_convexity(
    field: ShapeField,
    Cw: RatLike,
    delta_max: RatLike,
    trials: int,
    seed: int,
    config: EngineConfig = DEFAULT_CONFIG,
) -> ConvexityReport:
    """Randomized falsification of (Cw, delta_max)-convexity.

    Each trial draws delta <= delta_max, a point, a scale M, two member
    jets P1, P2 within the delta-difference band, and an exact
    unit-circle pair (Q1, Q2); it then checks membership of
    Q1.Q1.P1 + Q2.Q2.P2 in Gamma(x, Cw M). Violations carry full
    witness data; an empty list certifies nothing but failed attempts.
    """
    if trials < 1:
        raise PreconditionError("sample_convexity: trials must be >= 1")
    rng = random.Random(seed)
    space = field.space
    Cw_q = Q(Cw)
    dmax = Q(delta_max)
    violations: list[dict] = []
    notes: list[str] = []
    checked = 0
    for t in range(trials):
        delta = dmax * Q(rng.randint(1, 8), 8)
        x = field.points[rng.randrange(len(field.points))]
        gamma = field.gamma(x)
        M = Q(2) ** rng.randint(-2, 2)
        P1 = _gamma_vertex(gamma, M, rng, space)
        P2 = _gamma_vertex(gamma, M, rng, space)
        if P1 is None or P2 is None:
            notes.append(f"trial {t}: Gamma(x, {qstr(M)}) empty, skipped")
            continue
        # Pull P2 toward P1 until the difference bound (wsf2) holds.
        shrink = ONE
        for beta in space.indices:
            diff = abs(P1.coeff(beta) - P2.coeff(beta))
            bound = M * delta ** (space.m - mi_order(beta))
            if diff > bound:
                shrink = min(shrink, bound / diff)
        P2 = Jet(
            space,
            x,
            tuple(
                p1 + shrink * (p2 - p1)
                for p1, p2 in zip(P1.coeffs, P2.coeffs)
            ),
        )
        pair = _wsf_pair(space, x, delta, rng)
        if pair is None:
            notes.append(f"trial {t}: no admissible Q-pair, skipped")
            continue
        Q1, Q2 = pair
        combo = jet_multiply(jet_multiply(Q1, Q1, x), P1, x) + jet_multiply(
            jet_multiply(Q2, Q2, x), P2, x
        )
        checked += 1
        if not jet_in_gamma(combo, gamma, Cw_q * M):
            violations.append(
                {
                    "point": tuple(qstr(c) for c in x),
                    "delta": qstr(delta),
                    "M": qstr(M),
                    "P1": tuple(qstr(c) for c in P1.coeffs),
                    "P2": tuple(qstr(c) for c in P2.coeffs),
                    "Q1": tuple(qstr(c) for c in Q1.coeffs),
                    "Q2": tuple(qstr(c) for c in Q2.coeffs),
                    "combo": tuple(qstr(c) for c in combo.coeffs),
                }
            )
    return ConvexityReport(trials, checked, tuple(violations), tuple(notes))


# ---------------------------------------------------------------------------
# Basis certificates


@dataclass(frozen=True)
class BasisCertificate:
    """Claim: (basis[alpha])_{alpha in A} is an (A, delta, CB)-basis at
    (x0, M0, P0). Checked by verify_basis, never trusted."""

    A: frozenset[MultiIndex]
    x0: Point
    M0: Rat
    P0: Jet
    delta: Rat
    CB: Rat
    basis: Mapping[MultiIndex, Jet]
    weak: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "A", frozenset(self.A))
        object.__setattr__(self, "x0", as_point(self.x0))
        object.__setattr__(self, "M0", Q(self.M0))
        object.__setattr__(self, "delta", Q(self.delta))
        object.__setattr__(self, "CB", Q(self.CB))
        object.__setattr__(self, "basis", dict(self.basis))
        space = self.P0.space
        if self.P0.base != self.x0:
            raise PreconditionError("BasisCertificate: P0 must be based at x0")
        if set(self.basis) != set(self.A):
            raise PreconditionError("BasisCertificate: basis keys must equal A")
        for alpha, P in self.basis.items():
            if P.space != space or P.base != self.x0:
                raise PreconditionError("BasisCertificate: basis jet frame mismatch")
            if alpha not in space.index_set():
                raise PreconditionError("BasisCertificate: A must lie in the index set")
        if self.M0 <= 0 or self.delta <= 0 or self.CB <= 0:
            raise PreconditionError("BasisCertificate: M0, delta, CB must be positive")

    @property
    def space(self) -> JetSpace:
        return self.P0.space

    def sorted_A(self) -> list[MultiIndex]:
        return sorted(self.A, key=multiindex_key)

    def with_constant(self, CB: RatLike) -> "BasisCertificate":
        return BasisCertificate(
            self.A, self.x0, self.M0, self.P0, self.delta, Q(CB), self.basis, self.weak
        )


def verify_basis_report(cert: BasisCertificate, field: ShapeField) -> list[str]:
    """All violated basis conditions, as human-readable tags."""
    space = cert.space
    gamma = field.gamma(cert.x0)
    level = cert.CB * cert.M0
    failures: list[str] = []
    if not jet_in_gamma(cert.P0, gamma, level):
        failures.append("membership: P0 not in Gamma(x0, CB*M0)")
    for alpha in cert.sorted_A():
        P_alpha = cert.basis[alpha]
        step = cert.M0 * cert.delta ** (space.m - mi_order(alpha)) / cert.CB
        for sign, tag in ((ONE, "+"), (-ONE, "-")):
            shifted = cert.P0 + P_alpha.scale(sign * step)
            if not jet_in_gamma(shifted, gamma, level):
                failures.append(f"membership: P0 {tag} step*P_{alpha} escapes Gamma")
        for beta in cert.sorted_A():
            expected = ONE if beta == alpha else ZERO
            if P_alpha.coeff(beta) != expected:
                failures.append(f"kronecker: d^{beta} P_{alpha}(x0) != {qstr(expected)}")
        for beta in space.indices:
            if cert.weak and not multiindex_leq(alpha, beta):
                continue
            bound = cert.CB * cert.delta ** (mi_order(alpha) - mi_order(beta))
            if abs(P_alpha.coeff(beta)) > bound:
                failures.append(f"growth: |d^{beta} P_{alpha}(x0)| > CB*delta^(|a|-|b|)")
    return failures


def verify_basis(cert: BasisCertificate, field: ShapeField) -> bool:
    return not verify_basis_report(cert, field)


def _certify_at_scale(
    A: Iterable[MultiIndex],
    x0: Point,
    M0: Rat,
    P0: Jet,
    delta: Rat,
    base_CB: Rat,
    basis: Mapping[MultiIndex, Jet],
    field: ShapeField,
    config: EngineConfig,
    error_cls=VerificationError,
    context: str = "construction",
) -> BasisCertificate:
    """Wrap a constructed basis at the configured constant, escalating a
    bounded number of times before surfacing the failure."""
    CB = Q(config.cb_prime_factor) * base_CB
    last_report: list[str] = []
    for _ in range(config.cb_escalation_steps + 1):
        cert = BasisCertificate(frozenset(A), x0, M0, P0, delta, CB, basis, weak=False)
        last_report = verify_basis_report(cert, field)
        if not last_report:
            return cert
        CB = CB * 2
    raise error_cls(
        f"{context}: constructed basis fails verification at the configured "
        f"constants; first failure: {last_report[0]}"
    )


# ---------------------------------------------------------------------------
# Rescaling


@dataclass(frozen=True)
class RescaleInput:
    """Derivative matrix F[alpha][beta] with diagonal normalization data."""

    space: JetSpace
    A: frozenset[MultiIndex]
    F: Mapping[tuple[MultiIndex, MultiIndex], Rat]
    C: Rat
    a: Rat

    def __post_init__(self) -> None:
        object.__setattr__(self, "A", frozenset(self.A))
        object.__setattr__(self, "F", {k: Q(v) for k, v in self.F.items()})
        object.__setattr__(self, "C", Q(self.C))
        object.__setattr__(self, "a", Q(self.a))
        if not (0 < self.a < 1):
            raise PreconditionError("RescaleInput: need 0 < a < 1")
        for alpha in self.A:
            if self.entry(alpha, alpha) == 0:
                raise PreconditionError("RescaleInput: zero diagonal entry")
            for beta in self.space.indices:
                if multiindex_leq(alpha, beta):
                    if abs(self.entry(alpha, beta)) > self.C * abs(self.entry(alpha, alpha)):
                        raise PreconditionError(
                            "RescaleInput: upward entry exceeds C times the diagonal"
                        )
                if beta in self.A and beta != alpha and self.entry(alpha, beta) != 0:
                    raise PreconditionError("RescaleInput: off-diagonal A-entry nonzero")

    def entry(self, alpha: MultiIndex, beta: MultiIndex) -> Rat:
        return self.F.get((alpha, beta), ZERO)


@dataclass(frozen=True)
class RescaleOutput:
    lam: tuple[Rat, ...]
    phi: dict[MultiIndex, MultiIndex]


def _exponent_grid(n: int, depth: int):
    """All e in Z_{>=0}^n with sum(e) <= depth, by total sum then lex."""
    for total in range(depth + 1):
        for cuts in itertools.combinations(range(total + n - 1), n - 1):
            e = []
            prev = -1
            for c in cuts:
                e.append(c - prev - 1)
                prev = c
            e.append(total + n - 2 - prev if n > 1 else total)
            yield tuple(e)


def rescale(inp: RescaleInput, config: EngineConfig = DEFAULT_CONFIG) -> RescaleOutput:
    """Find lambda in (0,1]^n and phi with the domination property: after
    scaling column beta by lambda^beta, row alpha's entry at phi(alpha)
    dominates every other entry by the factor 1/a.

    Search over lambda_i = 2^{-e_i}, exponent vectors ordered by total
    sum; the first exactly-verified grid point wins, so the output is
    deterministic. phi(alpha) is forced: it must be the unique maximal
    scaled entry, and it must not exceed alpha in the multiindex order.
    """
    space = inp.space
    n = space.n
    A = sorted(inp.A, key=multiindex_key)
    if not A:
        return RescaleOutput((ONE,) * n, {})
    betas = space.indices
    half = Q(1, 2)
    for e in _exponent_grid(n, config.rescale_grid_depth):
        lam = tuple(half ** e_i for e_i in e)
        lam_pow = {
            beta: Q(2) ** (-sum(ei * bi for ei, bi in zip(e, beta))) for beta in betas
        }
        phi: dict[MultiIndex, MultiIndex] = {}
        feasible = True
        for alpha in A:
            scaled = [(abs(lam_pow[beta] * inp.entry(alpha, beta)), beta) for beta in betas]
            top_val = max(v for v, _ in scaled)
            top = [beta for v, beta in scaled if v == top_val]
            if len(top) != 1:
                feasible = False
                break
            beta_star = top[0]
            if not multiindex_leq(beta_star, alpha):
                feasible = False
                break
            if beta_star != alpha and beta_star in inp.A:
                feasible = False
                break
            if any(
                v > inp.a * top_val for v, beta in scaled if beta != beta_star
            ):
                feasible = False
                break
            phi[alpha] = beta_star
        if feasible:
            return RescaleOutput(lam, phi)
    raise SearchExhaustedError(
        f"rescale: no admissible lambda within grid depth {config.rescale_grid_depth}"
    )


# ---------------------------------------------------------------------------
# Relabeling


def relabel(
    cert: BasisCertificate,
    field: ShapeField,
    config: EngineConfig = DEFAULT_CONFIG,
) -> tuple[MonotonicSet, BasisCertificate]:
    """Convert a weak basis on an arbitrary A into a verified full basis
    on a monotonic Ahat <= A, strictly smaller when the scaled
    derivative matrix has an entry above the configured threshold.

    Follows the constructive proof: rescaling of the derivative matrix,
    selection of Abar = phi(A) with a section psi, normalized
    polynomials Pbar, the monotonic span Ahat, monomial multipliers S,
    truncated products, and a final exactly-inverted change of basis.
    """
    space = cert.space
    x0 = cert.x0
    delta = cert.delta
    if not cert.A:
        return MonotonicSet(space, frozenset()), cert

    report = verify_basis_report(cert, field)
    if report:
        raise PreconditionError(f"relabel: input certificate invalid: {report[0]}")

    A = cert.sorted_A()
    betas = space.indices
    F = {
        (alpha, beta): delta ** (mi_order(beta) - mi_order(alpha))
        * cert.basis[alpha].coeff(beta)
        for alpha in A
        for beta in betas
    }
    max_entry = max(abs(v) for v in F.values())
    over_threshold = max_entry > config.relabel_threshold

    out = rescale(
        RescaleInput(space, cert.A, F, cert.CB, config.relabel_accuracy), config
    )
    lam, phi = out.lam, out.phi

    def lam_pow(beta: MultiIndex) -> Rat:
        acc = ONE
        for l_i, b_i in zip(lam, beta):
            acc *= l_i**b_i
        return acc

    A_bar = sorted(set(phi.values()), key=multiindex_key)
    psi = {
        bar: min((alpha for alpha in A if phi[alpha] == bar), key=multiindex_key)
        for bar in A_bar
    }
    # Pbar_bar = b * delta^{|bar|-|psi(bar)|} * P_{psi(bar)}, normalized so
    # the scaled bar-derivative is exactly 1.
    P_bar: dict[MultiIndex, Jet] = {}
    for bar in A_bar:
        src = psi[bar]
        lead = (
            delta ** (mi_order(bar) - mi_order(src))
            * lam_pow(bar)
            * cert.basis[src].coeff(bar)
        )
        if lead == 0:
            raise ThresholdAmbiguousError(
                "relabel: rescale produced a vanishing leading entry"
            )
        P_bar[bar] = cert.basis[src].scale(
            delta ** (mi_order(bar) - mi_order(src)) / lead
        )

    A_hat = sorted(monotonic_span(A_bar, space), key=multiindex_key)

    chi: dict[MultiIndex, MultiIndex] = {}
    omega: dict[MultiIndex, MultiIndex] = {}
    for hat in A_hat:
        if hat in P_bar:
            chi[hat] = hat
            omega[hat] = (0,) * space.n
            continue
        for bar in A_bar:
            rest = mi_sub(hat, bar)
            if rest is not None:
                chi[hat] = bar
                omega[hat] = rest
                break
        else:
            raise ThresholdAmbiguousError("relabel: span element without a source")

    U: dict[MultiIndex, Jet] = {}
    for hat in A_hat:
        w = omega[hat]
        scale = (
            Q(mi_factorial(chi[hat]), mi_factorial(hat)) / lam_pow(w)
        )
        S = taylor_monomial(space, x0, w, scale)
        U[hat] = jet_multiply(S, P_bar[chi[hat]], x0)

    H = [
        [
            delta ** (mi_order(beta) - mi_order(hat)) * lam_pow(beta) * U[hat].coeff(beta)
            for beta in A_hat
        ]
        for hat in A_hat
    ]
    b = invert_matrix(H)
    if b is None:
        raise ThresholdAmbiguousError(
            "relabel: scaled product matrix is singular at the configured accuracy"
        )

    new_basis: dict[MultiIndex, Jet] = {}
    for gi, gamma in enumerate(A_hat):
        acc = Jet.zero(space, x0)
        for hi, hat in enumerate(A_hat):
            acc = acc + U[hat].scale(
                b[gi][hi] * delta ** (mi_order(gamma) - mi_order(hat))
            )
        new_basis[gamma] = acc.scale(lam_pow(gamma))

    for gamma in A_hat:
        for beta in A_hat:
            expected = ONE if beta == gamma else ZERO
            assert new_basis[gamma].coeff(beta) == expected, "exact Kronecker by inversion"

    hat_set = frozenset(A_hat)
    strictly_below = hat_set != cert.A and subset_less(hat_set, cert.A)
    if over_threshold and not strictly_below:
        raise ThresholdAmbiguousError(
            "relabel: threshold exceeded but the label did not strictly decrease"
        )
    if hat_set != cert.A and not strictly_below:
        raise ThresholdAmbiguousError("relabel: output label increased")

    out_cert = _certify_at_scale(
        hat_set,
        x0,
        cert.M0,
        cert.P0,
        delta,
        cert.CB,
        new_basis,
        field,
        config,
        error_cls=ThresholdAmbiguousError,
        context="relabel",
    )
    return MonotonicSet(space, hat_set), out_cert


# ---------------------------------------------------------------------------
# Control of the field through a basis


def control_gamma(
    cert: BasisCertificate,
    P: Jet,
    field: ShapeField,
    config: EngineConfig = DEFAULT_CONFIG,
) -> tuple[MonotonicSet, Jet, BasisCertificate]:
    """Given a member P that agrees with P0 on A but deviates at scale
    M0 delta^m, produce a strictly smaller monotonic label, a midpoint
    base jet, and a verified basis for it.

    The deviation direction joins the basis at the argmax index gamma,
    the A-part is corrected to keep the Kronecker property, and the
    enlarged (non-monotonic) basis is handed to relabel.
    """
    space = cert.space
    x0 = cert.x0
    delta = cert.delta
    gamma_poly = field.gamma(x0)

    if P.space != space or P.base != x0:
        raise PreconditionError("control_gamma: P frame mismatch")
    report = verify_basis_report(cert, field)
    if report:
        raise PreconditionError(f"control_gamma: input certificate invalid: {report[0]}")
    if not jet_in_gamma(P, gamma_poly, cert.CB * cert.M0):
        raise PreconditionError("control_gamma: P outside Gamma(x0, CB*M0)")
    for beta in cert.sorted_A():
        if P.coeff(beta) != cert.P0.coeff(beta):
            raise PreconditionError("control_gamma: P disagrees with P0 on A")
    diff = P - cert.P0
    dev = max(
        delta ** mi_order(beta) * abs(diff.coeff(beta)) for beta in space.indices
    )
    floor = cert.M0 * delta**space.m
    if dev < floor:
        raise PreconditionError("control_gamma: deviation below M0*delta^m")

    # Normalize the deviation to exactly M0*delta^m by a convex pull
    # toward P0; membership and the A-agreement are both preserved.
    t = floor / dev
    P = Jet(
        space,
        x0,
        tuple(p0 + t * d for p0, d in zip(cert.P0.coeffs, diff.coeffs)),
    )
    diff = P - cert.P0

    candidates = [
        beta
        for beta in space.indices
        if delta ** mi_order(beta) * abs(diff.coeff(beta)) == floor
    ]
    gamma_idx = min(candidates, key=multiindex_key)
    if gamma_idx in cert.A:
        raise PreconditionError("control_gamma: argmax landed inside A")

    P_hat0 = Jet(
        space,
        x0,
        tuple((a + b) / 2 for a, b in zip(cert.P0.coeffs, P.coeffs)),
    )

    lead = diff.coeff(gamma_idx)
    P_sharp_gamma = diff.scale(ONE / lead)
    new_basis: dict[MultiIndex, Jet] = {gamma_idx: P_sharp_gamma}
    for alpha in cert.sorted_A():
        P_alpha = cert.basis[alpha]
        new_basis[alpha] = P_alpha - P_sharp_gamma.scale(P_alpha.coeff(gamma_idx))

    enlarged = frozenset(cert.A | {gamma_idx})
    mid_cert = _certify_at_scale(
        enlarged,
        x0,
        cert.M0,
        P_hat0,
        delta,
        cert.CB,
        new_basis,
        field,
        config,
        context="control_gamma",
    )
    if not subset_less(enlarged, cert.A):
        raise VerificationError("control_gamma: enlarged label failed to decrease")

    hat_set, out_cert = relabel(mid_cert, field, config)
    if hat_set.members == cert.A or not subset_less(hat_set.members, cert.A):
        raise VerificationError("control_gamma: output label not strictly below A")

    # Conclusions on the midpoint: agreement on A and the difference
    # bound at every index, both exact.
    for beta in cert.sorted_A():
        assert P_hat0.coeff(beta) == cert.P0.coeff(beta)
    for beta in space.indices:
        bound = cert.M0 * delta ** (space.m - mi_order(beta))
        half_dev = abs(P_hat0.coeff(beta) - cert.P0.coeff(beta))
        if half_dev > bound:
            raise VerificationError("control_gamma: midpoint difference bound failed")

    return hat_set, P_hat0, out_cert


# ---------------------------------------------------------------------------
# Transport


def _transport_witness(
    field_prev: ShapeField,
    target: Jet,
    y0: Point,
    level: Rat,
    config: EngineConfig,
    objective: Sequence[RatLike] | None = None,
) -> Jet:
    w = refinement_witness(
        field_prev, target, y0, level, config,
        radius_scale=ONE, radius_side="hi", objective=objective,
    )
    if w is None:
        raise IllConditionedError(
            "transport: no refinement witness near a basis perturbation; "
            "the previous-level field is too small at the target point"
        )
    return w


def transport(
    certA: BasisCertificate,
    certAhat: BasisCertificate,
    y0: Sequence[RatLike],
    field_l0: ShapeField,
    field_l0_minus_1: ShapeField,
    eps0: RatLike | None = None,
    config: EngineConfig = DEFAULT_CONFIG,
) -> tuple[Jet, BasisCertificate, BasisCertificate]:
    """Move two bases at x0 over the l0-level field to a nearby point y0
    over the previous level, around a single new base jet.

    certA's label must be monotonic and its base jet must agree with
    certAhat's on that label; y0 must lie within eps0*delta of x0. The
    construction averages refinement witnesses of all basis
    perturbations, corrects the A-derivatives back to P0's by an exact
    linear solve, and reinverts both bases at y0.
    """
    space = certA.space
    x0 = certA.x0
    delta = certA.delta
    M0 = certA.M0
    eps = Q(eps0) if eps0 is not None else config.eps0

    if certAhat.space != space or certAhat.x0 != x0:
        raise PreconditionError("transport: certificates must share the base point")
    if certAhat.M0 != M0 or certAhat.delta != delta:
        raise PreconditionError("transport: certificates must share M0 and delta")
    if not is_monotonic(certA.A, space):
        raise PreconditionError("transport: A must be monotonic")
    for tag, c in (("A", certA), ("Ahat", certAhat)):
        report = verify_basis_report(c, field_l0)
        if report:
            raise PreconditionError(f"transport: {tag} certificate invalid: {report[0]}")
    y0_pt = as_point(y0)
    if not field_l0_minus_1.has_point(y0_pt):
        raise PreconditionError("transport: y0 not in E")
    if dist2(x0, y0_pt) > (eps * delta) ** 2:
        raise PreconditionError("transport: |x0 - y0| exceeds eps0 * delta")

    P0, Ph0 = certA.P0, certAhat.P0
    diff0 = P0 - Ph0
    for beta in certA.sorted_A():
        if diff0.coeff(beta) != 0:
            raise PreconditionError("transport: P0 and Phat0 disagree on A")
    # The difference constant is computed, not assumed.
    c_diff = max(
        (
            abs(diff0.coeff(beta)) / (M0 * delta ** (space.m - mi_order(beta)))
            for beta in space.indices
        ),
        default=ZERO,
    )

    A = certA.sorted_A()
    Ah = certAhat.sorted_A()
    CBp_base = max(certA.CB, certAhat.CB)

    if not A and not Ah:
        level = certA.CB * M0
        P_sharp = _transport_witness(field_l0_minus_1, P0, y0_pt, level, config)
        out = BasisCertificate(
            frozenset(), y0_pt, M0, P_sharp, delta,
            Q(config.cb_prime_factor) * CBp_base, {}, weak=False,
        )
        report = verify_basis_report(out, field_l0_minus_1)
        if report:
            raise VerificationError(f"transport: trivial case failed: {report[0]}")
        return recenter_jet(P_sharp, x0), out, out

    c0 = ONE / certA.CB
    ch0 = ONE / certAhat.CB

    # Refinement witnesses for every signed basis perturbation, pulled
    # back to the x0 frame for the averaging arithmetic.  Each witness
    # is pushed along its own signed direction so the +/- pair actually
    # separates; a flat feasible set still fails the correction solve.
    R_back = recenter_matrix(space, y0_pt, x0)

    def direction(alpha: MultiIndex, sigma: int) -> tuple[Rat, ...]:
        row = R_back[space.position[alpha]]
        return tuple(Q(sigma) * v for v in row)

    tilde: dict[tuple[MultiIndex, int], Jet] = {}
    for alpha in A:
        step = c0 * M0 * delta ** (space.m - mi_order(alpha))
        for sigma in (1, -1):
            target = P0 + certA.basis[alpha].scale(sigma * step)
            w = _transport_witness(
                field_l0_minus_1, target, y0_pt, certA.CB * M0, config,
                objective=direction(alpha, sigma),
            )
            tilde[(alpha, sigma)] = recenter_jet(w, x0)
    tilde_hat: dict[tuple[MultiIndex, int], Jet] = {}
    for alpha in Ah:
        step = ch0 * M0 * delta ** (space.m - mi_order(alpha))
        for sigma in (1, -1):
            target = Ph0 + certAhat.basis[alpha].scale(sigma * step)
            w = _transport_witness(
                field_l0_minus_1, target, y0_pt, certAhat.CB * M0, config,
                objective=direction(alpha, sigma),
            )
            tilde_hat[(alpha, sigma)] = recenter_jet(w, x0)

    count = len(A) + len(Ah)
    acc = Jet.zero(space, x0)
    for w in tilde.values():
        acc = acc + w
    for w in tilde_hat.values():
        acc = acc + w
    P_prime_base = acc.scale(Q(1, 2 * count))

    P_prime: dict[MultiIndex, Jet] = {}
    for alpha in A:
        step = c0 * M0 * delta ** (space.m - mi_order(alpha))
        P_prime[alpha] = (tilde[(alpha, 1)] - tilde[(alpha, -1)]).scale(ONE / (2 * step))
    Ph_prime: dict[MultiIndex, Jet] = {}
    for alpha in Ah:
        step = ch0 * M0 * delta ** (space.m - mi_order(alpha))
        Ph_prime[alpha] = (tilde_hat[(alpha, 1)] - tilde_hat[(alpha, -1)]).scale(
            ONE / (2 * step)
        )

    if A:
        G = [
            [
                delta ** (mi_order(beta) - mi_order(alpha)) * P_prime[alpha].coeff(beta)
                for alpha in A
            ]
            for beta in A
        ]
        rhs = [
            -(ONE / M0)
            * delta ** (mi_order(beta) - space.m)
            * (P_prime_base.coeff(beta) - P0.coeff(beta))
            for beta in A
        ]
        s_sharp = solve_linear_system(G, rhs)
        if s_sharp is None:
            raise IllConditionedError("transport: the A-correction system is singular")
        P_sharp = P_prime_base
        for alpha, s in zip(A, s_sharp):
            P_sharp = P_sharp + P_prime[alpha].scale(
                s * M0 * delta ** (space.m - mi_order(alpha))
            )
    else:
        P_sharp = P_prime_base

    # Conclusions at x0: exact agreement with P0 on A, and the bounded
    # difference at every index.
    sharp_diff = P_sharp - P0
    for beta in A:
        if sharp_diff.coeff(beta) != 0:
            raise VerificationError("transport: A-derivative correction not exact")
    bound_const = Q(config.cb_prime_factor) * CBp_base * (ONE + c_diff)
    for beta in space.indices:
        if abs(sharp_diff.coeff(beta)) > bound_const * M0 * delta ** (
            space.m - mi_order(beta)
        ):
            raise VerificationError("transport: difference bound failed at x0")

    def rebuild(
        label: Sequence[MultiIndex], prime: Mapping[MultiIndex, Jet]
    ) -> dict[MultiIndex, Jet]:
        if not label:
            return {}
        K = [
            [
                delta ** (mi_order(beta) - mi_order(alpha))
                * eval_jet_derivative(prime[alpha], beta, y0_pt)
                for alpha in label
            ]
            for beta in label
        ]
        binv = invert_matrix([list(row) for row in zip(*K)])
        if binv is None:
            raise IllConditionedError("transport: basis reinversion is singular at y0")
        out: dict[MultiIndex, Jet] = {}
        for gi, gamma in enumerate(label):
            acc2 = Jet.zero(space, x0)
            for ai, alpha in enumerate(label):
                acc2 = acc2 + prime[alpha].scale(
                    binv[gi][ai] * delta ** (mi_order(gamma) - mi_order(alpha))
                )
            out[gamma] = recenter_jet(acc2, y0_pt)
        return out

    P_sharp_y = recenter_jet(P_sharp, y0_pt)
    basis_A = rebuild(A, P_prime)
    basis_Ah = rebuild(Ah, Ph_prime)

    cert_out_A = _certify_at_scale(
        certA.A, y0_pt, M0, P_sharp_y, delta, CBp_base, basis_A,
        field_l0_minus_1, config, context="transport(A)",
    )
    cert_out_Ah = _certify_at_scale(
        certAhat.A, y0_pt, M0, P_sharp_y, delta, CBp_base, basis_Ah,
        field_l0_minus_1, config, context="transport(Ahat)",
    )
    return P_sharp, cert_out_A, cert_out_Ah
