"""Command-line entry points.

Subcommands: solve, finiteness, refine, czviz, verify, bench. All file
formats are the JSON documents from the documents module; identical
inputs produce byte-identical outputs. Wall-clock timings are opt-in
because they are the one thing that never reproduces.
"""

import math
import random
import sys
import time

import click

from . import documents as docs
from .config import DEFAULT_CONFIG
from .errors import (
    EngineError,
    InfeasibleProblemError,
    PreconditionError,
    SizeBudgetError,
)
from .exactq import ONE, Q, ZERO, as_fraction, qstr
from .finiteness import finiteness_functional, interval_problem, min_whitney_M
from .jets import JetSpace
from .selection import (
    DyadicCube,
    build_pou,
    check_cz_geometry,
    cz_decompose,
    enclosing_dyadic,
    recursive_select,
    select,
)
from .shapefields import jet_in_gamma, refine


def fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Exact smooth-selection toolkit: interpolation under convex
    constraints with rational arithmetic end to end."""


# ---------------------------------------------------------------------------
# solve


def membership_schedule(problem, res):
    """Per data point, the smallest audited constant at which the glued
    function's jet sits inside the constraint body."""
    out = []
    base = res.M_full if res.M_full > 0 else ONE
    for z in problem.E:
        jet = res.F.jet_at(z)
        gamma = problem.constraints[z]
        scale = base
        for _ in range(16):
            if jet_in_gamma(jet, gamma, scale):
                out.append((z, scale))
                break
            scale = scale * 2
        else:
            raise PreconditionError(
                f"membership audit failed at {docs.point_to_doc(z)}"
            )
    return out


@main.command()
@click.option("--input", "input_path", required=True, help="problem document")
@click.option("--output", "output_path", required=True, help="result document")
@click.option("--k", type=int, default=None, help="subset size for the functional")
@click.option(
    "--method",
    type=click.Choice(["direct", "recursive"]),
    default="direct",
    show_default=True,
)
@click.option("--timings", is_flag=True, help="include wall-clock times (approximate)")
def solve(input_path, output_path, k, method, timings):
    """Solve a selection problem and write a self-contained result."""
    try:
        data = docs.load_document(input_path)
        problem, options = docs.problem_from_doc(data)
    except docs.DocumentError as err:
        fail(str(err))
    if k is None and options.get("k") is not None:
        try:
            k = int(options["k"])
        except (TypeError, ValueError):
            fail("options.k must be an integer")
    t0 = time.perf_counter()
    try:
        if method == "recursive":
            res = recursive_select(problem)
        else:
            res = select(problem, k=k)
        membership = membership_schedule(problem, res)
    except InfeasibleProblemError as err:
        docs.dump_document(docs.infeasible_to_doc(err.subset), output_path)
        click.echo(f"infeasible: minimal bad subset of size {len(err.subset)}")
        sys.exit(2)
    except EngineError as err:
        fail(str(err))
    extra = {"total_s": round(time.perf_counter() - t0, 3)} if timings else None
    doc = docs.result_to_doc(res, problem, membership, extra)
    docs.dump_document(doc, output_path)
    ratio = doc["ratio"] if doc["ratio"] is not None else "n/a"
    click.echo(f"solved: M0 {doc['M0']}, M_full {doc['M_full']}, ratio {ratio}")
    sys.exit(0)


# ---------------------------------------------------------------------------
# finiteness table


@main.command()
@click.option("--input", "input_path", required=True)
@click.option("--k-min", type=int, required=True)
@click.option("--k-max", type=int, required=True)
@click.option("--output", "output_path", required=True)
def finiteness(input_path, k_min, k_max, output_path):
    """Tabulate the finiteness functional over a range of subset sizes."""
    if k_min < 1 or k_max < k_min:
        fail("need 1 <= k-min <= k-max")
    try:
        data = docs.load_document(input_path)
        problem, _ = docs.problem_from_doc(data)
    except docs.DocumentError as err:
        fail(str(err))
    table = []
    warning = None
    for k in range(k_min, k_max + 1):
        try:
            value, subset = finiteness_functional(problem, k)
        except SizeBudgetError as err:
            warning = f"stopped at k = {k}: {err}"
            break
        except EngineError as err:
            fail(str(err))
        table.append(
            {"k": k, "value": qstr(value), "subset": [docs.point_to_doc(p) for p in subset]}
        )
    stabilized = None
    if len(table) >= 2 and table[-1]["value"] == table[-2]["value"]:
        final = table[-1]["value"]
        stabilized = next(
            row["k"]
            for row in table
            if all(r["value"] == final for r in table if r["k"] >= row["k"])
        )
    out = {"table": table, "stabilized_at": stabilized}
    if warning is not None:
        out["warning"] = warning
        click.echo(f"warning: {warning}", err=True)
    docs.dump_document(out, output_path)
    click.echo(
        "functional: " + ", ".join(f"k={row['k']} -> {row['value']}" for row in table)
    )
    sys.exit(0)


# ---------------------------------------------------------------------------
# refinement


@main.command(name="refine")
@click.option("--input", "input_path", required=True, help="shape field document")
@click.option("--l", "level", type=int, required=True, help="refinement depth")
@click.option("--output", "output_path", required=True)
def refine_cmd(input_path, level, output_path):
    """Refine a shape field l times and emit canonical rows."""
    if level < 0:
        fail("l must be >= 0")
    try:
        data = docs.load_document(input_path)
        field = docs.shape_field_from_doc(data)
    except docs.DocumentError as err:
        fail(str(err))
    except EngineError as err:
        fail(str(err))
    try:
        refined = refine(field, level)
    except EngineError as err:
        fail(str(err))
    docs.dump_document(docs.shape_field_to_doc(refined), output_path)
    click.echo(f"refined {len(field.points)} point(s) to depth {level}")
    sys.exit(0)


# ---------------------------------------------------------------------------
# SVG rendering


def fmt6(value: float) -> str:
    return f"{value:.6f}"


def svg_for_decomposition(dec, pts_user, shift):
    """Deterministic SVG: leaf rectangles, dilate outlines, the root
    outline, and data markers. Leaves come in level-then-corner order."""

    def to_user(v, axis):
        return float(v - shift[axis])

    region = dec.region()
    n = len(region.lo)
    xs = [to_user(region.lo[0], 0), to_user(region.hi[0], 0)]
    if n == 2:
        ys = [to_user(region.lo[1], 1), to_user(region.hi[1], 1)]
    else:
        levels = sorted({c.level for c in dec.leaves}, reverse=True)
        row_of = {lv: i for i, lv in enumerate(levels)}
        band = 40.0
        ys = [0.0, band * len(levels)]
    width = 720.0
    scale = width / (xs[1] - xs[0])
    height = (ys[1] - ys[0]) * scale if n == 2 else (ys[1] - ys[0])
    margin = 24.0

    def px(v):
        return margin + (v - xs[0]) * scale

    def py(v):
        if n == 2:
            return margin + (ys[1] - v) * scale  # flip so larger y is up
        return margin + v

    out = []
    out.append(
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 %s %s">'
        % (fmt6(width + 2 * margin), fmt6(height + 2 * margin))
    )
    out.append(
        '<rect x="0" y="0" width="%s" height="%s" fill="white"/>'
        % (fmt6(width + 2 * margin), fmt6(height + 2 * margin))
    )

    def rect(x0, x1, y0, y1, style):
        xa, ya = px(x0), min(py(y0), py(y1))
        w, h = px(x1) - px(x0), abs(py(y1) - py(y0))
        out.append(
            '<rect x="%s" y="%s" width="%s" height="%s" %s/>'
            % (fmt6(xa), fmt6(ya), fmt6(w), fmt6(h), style)
        )

    leaf_style = 'fill="#eef3fa" stroke="#34495e" stroke-width="1"'
    dilate_style = 'fill="none" stroke="#b8860b" stroke-width="0.5" stroke-dasharray="4 3"'
    root_style = 'fill="none" stroke="#c0392b" stroke-width="2"'

    for leaf in dec.leaves:
        lo0, hi0 = to_user(leaf.lo[0], 0), to_user(leaf.hi[0], 0)
        if n == 2:
            rect(lo0, hi0, to_user(leaf.lo[1], 1), to_user(leaf.hi[1], 1), leaf_style)
        else:
            row = row_of[leaf.level]
            rect(lo0, hi0, row * 40.0 + 4.0, row * 40.0 + 36.0, leaf_style)
    for leaf in dec.leaves:
        d = leaf.dilate(dec.dilate_num, dec.dilate_den)
        lo0, hi0 = to_user(d.lo[0], 0), to_user(d.hi[0], 0)
        if n == 2:
            rect(lo0, hi0, to_user(d.lo[1], 1), to_user(d.hi[1], 1), dilate_style)
        else:
            row = row_of[leaf.level]
            rect(lo0, hi0, row * 40.0 + 4.0, row * 40.0 + 36.0, dilate_style)
    r = dec.root
    if n == 2:
        rect(
            to_user(r.lo[0], 0),
            to_user(r.hi[0], 0),
            to_user(r.lo[1], 1),
            to_user(r.hi[1], 1),
            root_style,
        )
    else:
        rect(to_user(r.lo[0], 0), to_user(r.hi[0], 0), 0.0, ys[1], root_style)
    for p in pts_user:
        cx = px(float(p[0]))
        cy = py(float(p[1])) if n == 2 else py(ys[1]) - 8.0
        out.append(
            '<circle cx="%s" cy="%s" r="3.500000" fill="#c0392b"/>' % (fmt6(cx), fmt6(cy))
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


@main.command()
@click.option("--input", "input_path", required=True, help="problem document")
@click.option("--svg", "svg_path", required=True)
@click.option(
    "--predicate",
    type=click.Choice(["simplified", "paper"]),
    default="simplified",
    show_default=True,
)
def czviz(input_path, svg_path, predicate):
    """Render the stopping-time decomposition of a problem's data set."""
    try:
        data = docs.load_document(input_path)
    except docs.DocumentError as err:
        fail(str(err))
    cfg = DEFAULT_CONFIG
    if isinstance(data, dict) and data.get("points") == []:
        # nothing to solve, but the empty decomposition still renders
        space = docs.space_from_doc(data, "problem")
        if space.n > 2:
            fail(f"czviz renders n <= 2 only, problem has n = {space.n}")
        root = DyadicCube(0, (0,) * space.n)
        dec = cz_decompose(root, [], "simplified", cfg)
        text = svg_for_decomposition(dec, [], (ZERO,) * space.n)
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(f"wrote {len(dec.leaves)} leaves")
        sys.exit(0)
    try:
        problem, _ = docs.problem_from_doc(data)
    except docs.DocumentError as err:
        fail(str(err))
    space = problem.space
    if space.n > 2:
        fail(f"czviz renders n <= 2 only, problem has n = {space.n}")
    if predicate == "paper":
        # the experimental predicate lives inside the recursive solver's
        # descent; render the decomposition that solver actually used
        try:
            res = recursive_select(problem)
        except EngineError as err:
            fail(str(err))
        shift = res.F.origin_shift or (ZERO,) * space.n
        dec = res.F.dec
    else:
        shift = tuple(
            Q(max(0, -_floor_min(problem.E, axis))) for axis in range(space.n)
        )
        shifted = [tuple(c + s for c, s in zip(p, shift)) for p in problem.E]
        lo = tuple(min(p[a] for p in shifted) for a in range(space.n))
        hi = tuple(max(p[a] for p in shifted) for a in range(space.n))
        try:
            root = enclosing_dyadic(lo, hi, cfg)
            dec = cz_decompose(root, shifted, "simplified", cfg)
        except EngineError as err:
            fail(str(err))
    text = svg_for_decomposition(dec, problem.E, shift)
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    click.echo(f"wrote {len(dec.leaves)} leaves")
    sys.exit(0)


def _floor_min(points, axis):
    worst = min(as_fraction(p[axis]) for p in points)
    return math.floor(worst)


# ---------------------------------------------------------------------------
# verification


def verify_result(doc):
    """Re-check a solved result from its serialized data alone. Returns a
    list of (check, ok, detail) triples."""
    out = []

    def check(name, ok, detail=""):
        out.append((name, bool(ok), detail))
        return ok

    if not isinstance(doc, dict) or doc.get("status") != "solved":
        check("status", False, "document is not a solved result")
        return out
    try:
        problem, _ = docs.problem_from_doc(doc.get("problem"))
        field = docs.whitney_from_doc(doc.get("field"))
        F = docs.glued_from_doc(doc.get("function"))
        m_full = docs.rat_from_doc(doc.get("M_full"), "M_full")
        m0 = docs.rat_from_doc(doc.get("M0"), "M0")
    except (docs.DocumentError, EngineError) as err:
        check("deserialize", False, str(err))
        return out
    check("deserialize", True)

    if not check(
        "field covers the data set",
        set(field.points) == set(problem.E),
        "stored field and problem disagree on points",
    ):
        return out

    if doc["function"].get("predicate") == "simplified":
        report = check_cz_geometry(F.dec)
        if not check(
            "decomposition geometry",
            report.ok,
            "; ".join(report.violations[:2]),
        ):
            return out
    if doc.get("method") == "direct":
        # the direct pipeline copies data-point jets verbatim onto the
        # leaves, so every piece must be one of the stored jets
        shift = F.origin_shift or (ZERO,) * problem.space.n
        stored = {p: field.jet(p).coeffs for p in field.points}
        pieces_ok = True
        detail = ""
        for leaf in F.dec.leaves:
            piece = F.pieces[leaf]
            anchor = tuple(b - s for b, s in zip(piece.base, shift))
            if anchor not in stored or piece.coeffs != stored[anchor]:
                pieces_ok = False
                detail = f"leaf at level {leaf.level}, corner {leaf.corner}"
                break
        if not check("pieces are the stored data jets", pieces_ok, detail):
            return out
    for z in problem.E:
        jet = F.jet_at(z)
        stored = field.jet(z)
        if not check(
            f"function reproduces the stored jet at {docs.point_to_doc(z)}",
            jet.coeffs == stored.coeffs,
            "glued jets differ from the stored field",
        ):
            return out
    recorded = {
        tuple(docs.rat_from_doc(v, "membership.x") for v in row["x"]): docs.rat_from_doc(
            row["M"], "membership.M"
        )
        for row in doc.get("verification", {}).get("membership", [])
    }
    for z in problem.E:
        scale = recorded.get(z)
        ok = scale is not None and jet_in_gamma(
            field.jet(z), problem.constraints[z], scale
        )
        if not check(
            f"membership at {docs.point_to_doc(z)}",
            ok,
            "stored jet leaves the constraint body at the recorded constant",
        ):
            return out
    try:
        m_check, _ = min_whitney_M(problem.E, problem.constraints, problem.space)
        check("M_full is the full-set minimum", m_check == m_full, qstr(m_check))
    except EngineError as err:
        check("M_full is the full-set minimum", False, str(err))
    if doc.get("method") == "direct" and doc.get("k") is not None:
        try:
            value, _ = finiteness_functional(problem, int(doc["k"]))
            check("M0 matches the functional", value == m0, qstr(value))
        except EngineError as err:
            check("M0 matches the functional", False, str(err))
    return out


@main.command()
@click.option("--result", "result_path", required=True)
def verify(result_path):
    """Re-verify every certificate in a result document."""
    try:
        doc = docs.load_document(result_path)
    except docs.DocumentError as err:
        fail(str(err))
    results = verify_result(doc)
    bad = [r for r in results if not r[1]]
    for name, ok, detail in results:
        mark = "ok" if ok else "FAIL"
        line = f"{mark:4} {name}"
        if detail and not ok:
            line += f" ({detail})"
        click.echo(line)
    if bad:
        click.echo(f"{len(bad)} check(s) failed", err=True)
        sys.exit(3)
    click.echo("all checks passed")
    sys.exit(0)


# ---------------------------------------------------------------------------
# benchmarks


def bench_decompose(seed):
    rng = random.Random(seed)
    total_leaves = 0
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        pts = sorted(
            {
                (Q(rng.randint(0, 63), 64), Q(rng.randint(0, 63), 64))
                for _ in range(rng.randint(2, 12))
            }
        )
        root = DyadicCube(0, (0, 0))
        dec = cz_decompose(root, pts, "simplified", DEFAULT_CONFIG)
        report = check_cz_geometry(dec)
        if not report.ok:
            return ["FAIL: geometry violation"], 1
        total_leaves += len(dec.leaves)
        worst = max(worst, len(dec.leaves))
    dt = time.perf_counter() - t0
    return [
        f"20 decompositions, {total_leaves} leaves total, largest {int(worst)}",
        f"approx wall time: {dt:.2f}s",
    ], 0


def bench_select(seed):
    rng = random.Random(seed)
    space = JetSpace(2, 1)
    worst_ratio = ZERO
    t0 = time.perf_counter()
    for _ in range(10):
        xs = sorted({Q(rng.randint(0, 40), 8) for _ in range(rng.randint(2, 6))})
        mids = [Q(rng.randint(-6, 6), 3) for _ in xs]
        widths = [Q(rng.randint(0, 3), 2) for _ in xs]
        prob = interval_problem(
            space,
            [(x,) for x in xs],
            [(m - w, m + w) for m, w in zip(mids, widths)],
        )
        res = select(prob, k=3)
        if res.ratio is not None and res.ratio > worst_ratio:
            worst_ratio = res.ratio
    dt = time.perf_counter() - t0
    return [
        f"10 interval problems solved, worst M_full/M0 ratio {qstr(worst_ratio)}",
        f"approx wall time: {dt:.2f}s",
    ], 0


def bench_pou(seed):
    rng = random.Random(seed)
    pts = sorted({Q(rng.randint(1, 63), 64) for _ in range(6)})
    root = DyadicCube(0, (0,))
    dec = cz_decompose(root, [(p,) for p in pts], "simplified", DEFAULT_CONFIG)
    pou = build_pou(dec, 2, DEFAULT_CONFIG)
    region = dec.region()
    width = region.hi[0] - region.lo[0]
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(2000):
        x = (region.lo[0] + width * Q(i, 2000),)
        total = sum(pou.theta(leaf, x) ** 2 for leaf in pou.active(x))
        worst = max(worst, abs(total - 1.0))
    dt = time.perf_counter() - t0
    return [
        f"{len(dec.leaves)} leaves, 2000 sums, worst float deviation {worst:.3e}",
        f"approx wall time: {dt:.2f}s",
    ], 0


BENCH_SUITES = {
    "decompose": bench_decompose,
    "select": bench_select,
    "pou": bench_pou,
}


@main.command()
@click.option("--suite", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def bench(suite, seed):
    """Run a named benchmark suite with a fixed seed."""
    runner = BENCH_SUITES.get(suite)
    if runner is None:
        fail(f"unknown suite {suite!r}; available: {', '.join(sorted(BENCH_SUITES))}")
    lines, code = runner(seed)
    for line in lines:
        click.echo(line)
    sys.exit(code)


if __name__ == "__main__":
    main()
