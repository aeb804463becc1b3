"""JSON document formats for problems, fields, glued interpolants, and
solver results.

Rationals travel as "p/q" strings so every document round-trips without
loss; floats appear only in reporting fields that are explicitly
approximate. Serializers emit canonical key order and canonical row
order, which makes byte-identical output a property of the data rather
than of dict iteration history.
"""

import json
from collections.abc import Mapping, Sequence

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import PreconditionError
from .exactq import ONE, Q, Rat, ZERO, parse_q, qstr
from .finiteness import SelectionProblem, WhitneyField, value_row_pair
from .jets import Jet, JetSpace
from .metrics import Point, as_point
from .polyhedra import ParamPolyhedron, prune_all_m
from .selection import (
    CZDecomposition,
    DyadicCube,
    GluedFunction,
    PartitionOfUnity,
    SelectionResult,
)
from .shapefields import ShapeField, field_from_rows


class DocumentError(ValueError):
    """A document failed to parse or violates the format contract."""


# ---------------------------------------------------------------------------
# primitives


def load_document(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise DocumentError(f"{path}: {err.strerror or err}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise DocumentError(
            f"{path}: malformed JSON at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from None


def dump_document(data, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_document(data))


def render_document(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def rat_from_doc(value, where: str) -> Rat:
    if isinstance(value, float):
        raise DocumentError(f"{where}: floats do not round-trip, use a rational string")
    try:
        return parse_q(value)
    except (ValueError, TypeError) as err:
        raise DocumentError(f"{where}: {err}") from None


def point_from_doc(value, n: int, where: str) -> Point:
    if not isinstance(value, list) or len(value) != n:
        raise DocumentError(f"{where}: expected a list of {n} rational strings")
    return tuple(rat_from_doc(v, where) for v in value)


def point_to_doc(p: Sequence) -> list:
    return [qstr(Q(v)) for v in p]


def space_from_doc(doc, where: str = "document") -> JetSpace:
    if not isinstance(doc, Mapping):
        raise DocumentError(f"{where}: missing m/n")
    try:
        m, n = int(doc["m"]), int(doc["n"])
    except (KeyError, TypeError, ValueError):
        raise DocumentError(f"{where}: m and n must be integers") from None
    if m < 1 or n < 1:
        raise DocumentError(f"{where}: m and n must be >= 1")
    return JetSpace(m, n)


def space_to_doc(space: JetSpace) -> dict:
    return {"m": space.m, "n": space.n}


# ---------------------------------------------------------------------------
# constraint descriptors


def rows_from_constraint(space: JetSpace, kdoc, where: str):
    """One constraint descriptor to inequality rows over the jet frame."""
    if not isinstance(kdoc, Mapping) or "type" not in kdoc:
        raise DocumentError(f"{where}: constraint needs a type")
    kind = kdoc["type"]
    if kind == "interval":
        lo = kdoc.get("lo")
        hi = kdoc.get("hi")
        lo_q = None if lo is None else rat_from_doc(lo, where)
        hi_q = None if hi is None else rat_from_doc(hi, where)
        if lo_q is not None and hi_q is not None and lo_q > hi_q:
            raise DocumentError(f"{where}: empty interval")
        return tuple(value_row_pair(space, lo_q, hi_q))
    if kind == "singleton":
        if "value" not in kdoc:
            raise DocumentError(f"{where}: singleton needs a value")
        v = rat_from_doc(kdoc["value"], where)
        return tuple(value_row_pair(space, v, v))
    if kind == "affine":
        pins = kdoc.get("pins")
        if not isinstance(pins, list) or not pins:
            raise DocumentError(f"{where}: affine needs a pins list")
        rows = []
        for pin in pins:
            idx = pin.get("index") if isinstance(pin, Mapping) else None
            if not isinstance(idx, list) or tuple(idx) not in space.position:
                raise DocumentError(f"{where}: pin index must be a multiindex of the space")
            value = rat_from_doc(pin.get("value"), where)
            pos = space.position[tuple(int(i) for i in idx)]
            for sign in (ONE, -ONE):
                a = [ZERO] * space.dim
                a[pos] = sign
                rows.append((tuple(a), sign * value, ZERO))
        return tuple(rows)
    if kind == "hrep":
        raw = kdoc.get("rows")
        if not isinstance(raw, list):
            raise DocumentError(f"{where}: hrep needs a rows list")
        rows = []
        for i, row in enumerate(raw):
            spot = f"{where}, row {i}"
            if not isinstance(row, Mapping):
                raise DocumentError(f"{spot}: expected an object with a, b, c")
            a = row.get("a")
            if not isinstance(a, list) or len(a) != space.dim:
                raise DocumentError(f"{spot}: a must have {space.dim} entries")
            rows.append(
                (
                    tuple(rat_from_doc(v, spot) for v in a),
                    rat_from_doc(row.get("b", "0"), spot),
                    rat_from_doc(row.get("c", "0"), spot),
                )
            )
        return tuple(rows)
    raise DocumentError(f"{where}: unknown constraint type {kind!r}")


def rows_to_doc(rows) -> list:
    return [
        {"a": [qstr(v) for v in a], "b": qstr(b), "c": qstr(c)}
        for a, b, c in rows
    ]


def canonical_rows(poly: ParamPolyhedron):
    """Redundancy-pruned rows in a fixed total order, for diffable output."""
    pruned = prune_all_m(poly)
    return tuple(sorted(pruned.rows, key=lambda r: (r[0], r[1], r[2])))


# ---------------------------------------------------------------------------
# problems


def problem_from_doc(doc) -> tuple[SelectionProblem, dict]:
    if not isinstance(doc, Mapping):
        raise DocumentError("problem document must be a JSON object")
    space = space_from_doc(doc, "problem")
    raw_points = doc.get("points")
    if not isinstance(raw_points, list) or not raw_points:
        raise DocumentError("problem: needs a nonempty points list")
    pts = []
    cons = {}
    for i, entry in enumerate(raw_points):
        where = f"points[{i}]"
        if not isinstance(entry, Mapping) or "x" not in entry or "K" not in entry:
            raise DocumentError(f"{where}: expected x and K")
        x = point_from_doc(entry["x"], space.n, where)
        if x in cons:
            raise DocumentError(f"{where}: duplicate point {point_to_doc(x)}")
        rows = rows_from_constraint(space, entry["K"], where)
        pts.append(x)
        cons[x] = ParamPolyhedron(space.dim, rows)
    options = doc.get("options") or {}
    if not isinstance(options, Mapping):
        raise DocumentError("problem: options must be an object")
    problem = SelectionProblem(space, tuple(pts), cons)
    return problem, dict(options)


def problem_to_doc(problem: SelectionProblem, options: Mapping | None = None) -> dict:
    doc = {
        "m": problem.space.m,
        "n": problem.space.n,
        "points": [
            {
                "x": point_to_doc(p),
                "K": {"type": "hrep", "rows": rows_to_doc(problem.constraints[p].rows)},
            }
            for p in problem.E
        ],
    }
    if options:
        doc["options"] = dict(options)
    return doc


# ---------------------------------------------------------------------------
# shape fields


def shape_field_from_doc(doc, config: EngineConfig = DEFAULT_CONFIG) -> ShapeField:
    if not isinstance(doc, Mapping):
        raise DocumentError("shape field document must be a JSON object")
    space = space_from_doc(doc.get("space"), "shape field")
    raw = doc.get("points")
    if not isinstance(raw, list) or not raw:
        raise DocumentError("shape field: needs a nonempty points list")
    entries = {}
    for i, entry in enumerate(raw):
        where = f"points[{i}]"
        if not isinstance(entry, Mapping) or "x" not in entry or "rows" not in entry:
            raise DocumentError(f"{where}: expected x and rows")
        x = point_from_doc(entry["x"], space.n, where)
        if x in entries:
            raise DocumentError(f"{where}: duplicate point")
        entries[x] = rows_from_constraint(
            space, {"type": "hrep", "rows": entry["rows"]}, where
        )
    return field_from_rows(space, entries)


def shape_field_to_doc(field: ShapeField) -> dict:
    return {
        "space": space_to_doc(field.space),
        "points": [
            {"x": point_to_doc(p), "rows": rows_to_doc(canonical_rows(g))}
            for p, g in sorted(zip(field.points, field.gammas), key=lambda t: t[0])
        ],
    }


# ---------------------------------------------------------------------------
# Whitney fields and glued functions


def whitney_to_doc(field: WhitneyField) -> dict:
    return {
        "space": space_to_doc(field.space),
        "entries": [
            {"x": point_to_doc(p), "coeffs": [qstr(c) for c in field.jet(p).coeffs]}
            for p in sorted(field.points)
        ],
    }


def whitney_from_doc(doc) -> WhitneyField:
    if not isinstance(doc, Mapping):
        raise DocumentError("field document must be a JSON object")
    space = space_from_doc(doc.get("space"), "field")
    raw = doc.get("entries")
    if not isinstance(raw, list) or not raw:
        raise DocumentError("field: needs a nonempty entries list")
    jets = {}
    for i, entry in enumerate(raw):
        where = f"entries[{i}]"
        x = point_from_doc(entry.get("x"), space.n, where)
        coeffs = entry.get("coeffs")
        if not isinstance(coeffs, list) or len(coeffs) != space.dim:
            raise DocumentError(f"{where}: coeffs must have {space.dim} entries")
        jets[x] = Jet(space, x, tuple(rat_from_doc(c, where) for c in coeffs))
    return WhitneyField(space, jets)


def cube_to_doc(cube: DyadicCube) -> dict:
    return {"level": cube.level, "corner": list(cube.corner)}


def cube_from_doc(doc, where: str) -> DyadicCube:
    if not isinstance(doc, Mapping):
        raise DocumentError(f"{where}: expected a level/corner object")
    try:
        level = int(doc["level"])
        corner = tuple(int(c) for c in doc["corner"])
    except (KeyError, TypeError, ValueError):
        raise DocumentError(f"{where}: cube needs integer level and corner") from None
    return DyadicCube(level, corner)


def glued_to_doc(F: GluedFunction) -> dict:
    leaves = []
    for leaf in F.dec.leaves:
        piece = F.pieces[leaf]
        if isinstance(piece, GluedFunction):
            body = {"kind": "glued", "function": glued_to_doc(piece)}
        else:
            body = {
                "kind": "jet",
                "base": point_to_doc(piece.base),
                "coeffs": [qstr(c) for c in piece.coeffs],
            }
        leaves.append({**cube_to_doc(leaf), "piece": body})
    doc = {
        "space": space_to_doc(F.space),
        "root": cube_to_doc(F.dec.root),
        "predicate": F.dec.predicate_tag,
        "dilate": [F.dec.dilate_num, F.dec.dilate_den],
        "outer": F.dec.outer,
        "pou_m": F.pou.m,
        "leaves": leaves,
    }
    if F.origin_shift is not None:
        doc["origin_shift"] = point_to_doc(F.origin_shift)
    return doc


def glued_from_doc(doc, config: EngineConfig = DEFAULT_CONFIG) -> GluedFunction:
    if not isinstance(doc, Mapping):
        raise DocumentError("function document must be a JSON object")
    space = space_from_doc(doc.get("space"), "function")
    root = cube_from_doc(doc.get("root"), "function root")
    dilate = doc.get("dilate", [65, 64])
    if not isinstance(dilate, list) or len(dilate) != 2:
        raise DocumentError("function: dilate must be a pair")
    raw_leaves = doc.get("leaves")
    if not isinstance(raw_leaves, list) or not raw_leaves:
        raise DocumentError("function: needs a nonempty leaves list")
    cubes = []
    pieces = {}
    for i, entry in enumerate(raw_leaves):
        where = f"leaves[{i}]"
        cube = cube_from_doc(entry, where)
        body = entry.get("piece") if isinstance(entry, Mapping) else None
        if not isinstance(body, Mapping) or "kind" not in body:
            raise DocumentError(f"{where}: piece needs a kind")
        if body["kind"] == "jet":
            base = point_from_doc(body.get("base"), space.n, where)
            coeffs = body.get("coeffs")
            if not isinstance(coeffs, list) or len(coeffs) != space.dim:
                raise DocumentError(f"{where}: coeffs must have {space.dim} entries")
            pieces[cube] = Jet(
                space, base, tuple(rat_from_doc(c, where) for c in coeffs)
            )
        elif body["kind"] == "glued":
            pieces[cube] = glued_from_doc(body.get("function"), config)
        else:
            raise DocumentError(f"{where}: unknown piece kind {body['kind']!r}")
        cubes.append(cube)
    dec = CZDecomposition(
        root,
        tuple(sorted(cubes, key=DyadicCube.sort_key)),
        str(doc.get("predicate", "custom")),
        int(dilate[0]),
        int(dilate[1]),
        int(doc.get("outer", 5)),
    )
    try:
        pou_m = int(doc.get("pou_m", space.m))
    except (TypeError, ValueError):
        raise DocumentError("function: pou_m must be an integer") from None
    pou = PartitionOfUnity(dec, pou_m, config)
    shift = doc.get("origin_shift")
    shift_pt = None if shift is None else point_from_doc(shift, space.n, "origin_shift")
    return GluedFunction(space, dec, pou, pieces, shift_pt)


# ---------------------------------------------------------------------------
# results


def result_to_doc(
    res: SelectionResult,
    problem: SelectionProblem,
    membership: Sequence[tuple[Point, Rat]],
    timings: Mapping | None = None,
) -> dict:
    wdoc = {
        "space": space_to_doc(problem.space),
        "entries": [
            {
                "x": point_to_doc(z),
                "coeffs": [qstr(c) for c in res.F.jet_at(z).coeffs],
            }
            for z in problem.E
        ],
    }
    doc = {
        "status": "solved",
        "method": res.method,
        "k": res.k,
        "M0": qstr(res.M0),
        "M_full": qstr(res.M_full),
        "ratio": None if res.ratio is None else qstr(res.ratio),
        "problem": problem_to_doc(problem),
        "field": wdoc,
        "function": glued_to_doc(res.F),
        "verification": {
            "geometry_ok": res.geometry.ok,
            "membership": [
                {"x": point_to_doc(z), "M": qstr(m)} for z, m in membership
            ],
            "notes": list(res.checks),
        },
    }
    if res.functional_subset:
        doc["functional_subset"] = [point_to_doc(p) for p in res.functional_subset]
    if timings is not None:
        doc["timings"] = dict(timings)
    return doc


def infeasible_to_doc(subset) -> dict:
    return {
        "status": "infeasible",
        "subset": [point_to_doc(p) for p in subset],
    }
