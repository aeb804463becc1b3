"""Command-line toolkit: document round-trips, frozen solver outputs,
tamper detection, SVG determinism, and exit-code contracts."""

import json

import pytest
from click.testing import CliRunner

from smoothsel import documents as docs
from smoothsel.cli import main
from smoothsel.exactq import ONE, Q, ZERO
from smoothsel.finiteness import SelectionProblem, value_row_pair
from smoothsel.jets import JetSpace
from smoothsel.polyhedra import ParamPolyhedron, solve_lp_rows
from smoothsel.selection import select

S21 = JetSpace(2, 1)


def all_output(result):
    try:
        err = result.stderr
    except (ValueError, AttributeError):
        err = ""
    return result.output + err


def run(*args):
    return CliRunner().invoke(main, list(args))


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def parabola_doc():
    return {
        "m": 2,
        "n": 1,
        "points": [
            {"x": ["0"], "K": {"type": "singleton", "value": "0"}},
            {"x": ["1"], "K": {"type": "singleton", "value": "1"}},
            {"x": ["2"], "K": {"type": "singleton", "value": "0"}},
        ],
        "options": {"k": 3},
    }


# ---------------------------------------------------------------------------
# document layer


def test_problem_document_round_trip():
    space = S21
    rows = value_row_pair(space, Q(-1, 3), Q(2))
    cons = {
        (ZERO,): ParamPolyhedron(space.dim, tuple(rows)),
        (Q(1, 2),): ParamPolyhedron(space.dim, tuple(value_row_pair(space, ONE, ONE))),
    }
    problem = SelectionProblem(space, ((ZERO,), (Q(1, 2),)), cons)
    doc = docs.problem_to_doc(problem, {"k": 2})
    back, options = docs.problem_from_doc(doc)
    assert options == {"k": 2}
    assert back.space == problem.space and back.E == problem.E
    for p in problem.E:
        assert back.constraints[p].rows == problem.constraints[p].rows
    # serialization is canonical: a second trip gives identical bytes
    assert docs.render_document(docs.problem_to_doc(back, {"k": 2})) == docs.render_document(doc)


def test_constraint_descriptor_validation():
    with pytest.raises(docs.DocumentError, match="unknown constraint type"):
        docs.rows_from_constraint(S21, {"type": "ball"}, "points[0]")
    with pytest.raises(docs.DocumentError, match="empty interval"):
        docs.rows_from_constraint(S21, {"type": "interval", "lo": "1", "hi": "0"}, "p")
    with pytest.raises(docs.DocumentError, match="floats"):
        docs.rows_from_constraint(S21, {"type": "singleton", "value": 0.5}, "p")
    rows = docs.rows_from_constraint(
        S21, {"type": "affine", "pins": [{"index": [1], "value": "3"}]}, "p"
    )
    assert len(rows) == 2  # the derivative coefficient pinned both ways
    pos = S21.position[(1,)]
    assert all(r[0][pos] != 0 for r in rows)


def test_glued_function_document_round_trip(tmp_path):
    prob, _ = docs.problem_from_doc(parabola_doc())
    res = select(prob, k=3)
    doc = docs.glued_to_doc(res.F)
    rebuilt = docs.glued_from_doc(doc)
    for i in range(9):
        x = (Q(i, 4),)
        assert rebuilt(x) == res.F(x)
        assert rebuilt.jet_at(x).coeffs == res.F.jet_at(x).coeffs
    assert docs.render_document(docs.glued_to_doc(rebuilt)) == docs.render_document(doc)


# ---------------------------------------------------------------------------
# solve


def test_solve_parabola_and_verify(tmp_path):
    inp = write_json(tmp_path / "p.json", parabola_doc())
    out = str(tmp_path / "r.json")
    result = run("solve", "--input", inp, "--output", out)
    assert result.exit_code == 0, all_output(result)
    doc = json.loads(open(out).read())
    assert doc["status"] == "solved"
    assert doc["M0"] == "1" and doc["M_full"] == "1" and doc["ratio"] == "1"
    assert doc["verification"]["geometry_ok"] is True
    check = run("verify", "--result", out)
    assert check.exit_code == 0, all_output(check)
    assert "all checks passed" in check.output


def test_solve_output_is_byte_identical(tmp_path):
    inp = write_json(tmp_path / "p.json", parabola_doc())
    out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert run("solve", "--input", inp, "--output", out1).exit_code == 0
    assert run("solve", "--input", inp, "--output", out2).exit_code == 0
    assert open(out1, "rb").read() == open(out2, "rb").read()


def test_solve_infeasible_reports_minimal_subset(tmp_path):
    doc = {
        "m": 2,
        "n": 1,
        "points": [
            {"x": ["0"], "K": {"type": "interval", "lo": "0", "hi": "1"}},
            {
                "x": ["1"],
                "K": {
                    "type": "hrep",
                    "rows": [
                        {"a": ["1", "0"], "b": "0", "c": "0"},
                        {"a": ["-1", "0"], "b": "-1", "c": "0"},
                    ],
                },
            },
        ],
    }
    inp = write_json(tmp_path / "p.json", doc)
    out = str(tmp_path / "r.json")
    result = run("solve", "--input", inp, "--output", out)
    assert result.exit_code == 2
    written = json.loads(open(out).read())
    assert written == {"status": "infeasible", "subset": [["1"]]}


def test_solve_missing_file_exits_one(tmp_path):
    result = run("solve", "--input", str(tmp_path / "nope.json"), "--output", "x")
    assert result.exit_code == 1


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"m": 2,, "n": 1}')
    result = run("solve", "--input", str(path), "--output", str(tmp_path / "o"))
    assert result.exit_code == 1
    assert "line 1, column 9" in all_output(result)


def test_solve_recursive_method_verifies(tmp_path):
    doc = {
        "m": 2,
        "n": 1,
        "points": [
            {"x": ["0"], "K": {"type": "singleton", "value": "0"}},
            {"x": ["1/64"], "K": {"type": "singleton", "value": "1/64"}},
        ],
    }
    inp = write_json(tmp_path / "p.json", doc)
    out = str(tmp_path / "r.json")
    result = run("solve", "--input", inp, "--output", out, "--method", "recursive")
    assert result.exit_code == 0, all_output(result)
    written = json.loads(open(out).read())
    assert written["method"] == "recursive"
    check = run("verify", "--result", out)
    assert check.exit_code == 0, all_output(check)


# ---------------------------------------------------------------------------
# finiteness


def test_finiteness_table_matches_hand_values(tmp_path):
    inp = write_json(tmp_path / "p.json", parabola_doc())
    out = str(tmp_path / "t.json")
    result = run(
        "finiteness", "--input", inp, "--k-min", "1", "--k-max", "4", "--output", out
    )
    assert result.exit_code == 0, all_output(result)
    table = json.loads(open(out).read())
    assert [row["value"] for row in table["table"]] == ["0", "0", "1", "1"]
    assert table["stabilized_at"] == 3


def test_finiteness_single_point_constant_tail(tmp_path):
    doc = {
        "m": 2,
        "n": 1,
        "points": [{"x": ["0"], "K": {"type": "singleton", "value": "5"}}],
    }
    inp = write_json(tmp_path / "p.json", doc)
    out = str(tmp_path / "t.json")
    result = run(
        "finiteness", "--input", inp, "--k-min", "1", "--k-max", "3", "--output", out
    )
    assert result.exit_code == 0
    table = json.loads(open(out).read())
    assert [row["value"] for row in table["table"]] == ["0", "0", "0"]
    assert table["stabilized_at"] == 1


# ---------------------------------------------------------------------------
# refine


def m1_field_doc():
    return {
        "space": {"m": 1, "n": 1},
        "points": [
            {
                "x": ["0"],
                "rows": [
                    {"a": ["1"], "b": "0", "c": "0"},
                    {"a": ["-1"], "b": "0", "c": "0"},
                ],
            },
            {
                "x": ["1"],
                "rows": [
                    {"a": ["1"], "b": "2", "c": "0"},
                    {"a": ["-1"], "b": "-2", "c": "0"},
                ],
            },
        ],
    }


def test_refine_zero_canonicalizes_idempotently(tmp_path):
    inp = write_json(tmp_path / "f.json", m1_field_doc())
    out1, out2 = str(tmp_path / "c1.json"), str(tmp_path / "c2.json")
    assert run("refine", "--input", inp, "--l", "0", "--output", out1).exit_code == 0
    assert run("refine", "--input", out1, "--l", "0", "--output", out2).exit_code == 0
    assert open(out1, "rb").read() == open(out2, "rb").read()


def test_refine_once_encodes_the_seminorm_gate(tmp_path):
    # pinned values 0 and 2 at distance 1 with order-1 jets: the refined
    # body at either point is nonempty exactly when M >= 2
    inp = write_json(tmp_path / "f.json", m1_field_doc())
    out = str(tmp_path / "g.json")
    assert run("refine", "--input", inp, "--l", "1", "--output", out).exit_code == 0
    doc = json.loads(open(out).read())
    space = JetSpace(1, 1)
    for entry in doc["points"]:
        rows = [
            (
                tuple(docs.rat_from_doc(v, "a") for v in r["a"]),
                docs.rat_from_doc(r["b"], "b"),
                docs.rat_from_doc(r["c"], "c"),
            )
            for r in entry["rows"]
        ]
        poly = ParamPolyhedron(space.dim, tuple(rows))
        assert solve_lp_rows(poly.rows_at(Q(2)), space.dim).feasible
        assert not solve_lp_rows(poly.rows_at(Q(255, 128)), space.dim).feasible


# ---------------------------------------------------------------------------
# czviz


def test_czviz_deterministic_svg(tmp_path):
    inp = write_json(tmp_path / "p.json", parabola_doc())
    s1, s2 = str(tmp_path / "a.svg"), str(tmp_path / "b.svg")
    assert run("czviz", "--input", inp, "--svg", s1).exit_code == 0
    assert run("czviz", "--input", inp, "--svg", s2).exit_code == 0
    b1 = open(s1, "rb").read()
    assert b1 == open(s2, "rb").read()
    text = b1.decode()
    assert text.startswith("<svg ")
    assert text.count("<circle") == 3  # one marker per data point
    assert ".000000" in text  # fixed 6-decimal precision


def test_czviz_empty_set_renders(tmp_path):
    inp = write_json(tmp_path / "p.json", {"m": 2, "n": 1, "points": []})
    svg = str(tmp_path / "e.svg")
    result = run("czviz", "--input", inp, "--svg", svg)
    assert result.exit_code == 0
    assert "<rect" in open(svg).read()


def test_czviz_rejects_three_dimensions(tmp_path):
    doc = {
        "m": 2,
        "n": 3,
        "points": [{"x": ["0", "0", "0"], "K": {"type": "singleton", "value": "0"}}],
    }
    inp = write_json(tmp_path / "p.json", doc)
    result = run("czviz", "--input", inp, "--svg", str(tmp_path / "x.svg"))
    assert result.exit_code == 1
    assert "n <= 2" in all_output(result)


def test_czviz_paper_predicate_runs(tmp_path):
    doc = {
        "m": 2,
        "n": 1,
        "points": [
            {"x": ["0"], "K": {"type": "singleton", "value": "0"}},
            {"x": ["1/64"], "K": {"type": "singleton", "value": "1/64"}},
        ],
    }
    inp = write_json(tmp_path / "p.json", doc)
    svg = str(tmp_path / "p.svg")
    result = run("czviz", "--input", inp, "--svg", svg, "--predicate", "paper")
    assert result.exit_code == 0, all_output(result)
    assert "<svg" in open(svg).read()


# ---------------------------------------------------------------------------
# verify tamper detection


def solved_result(tmp_path):
    inp = write_json(tmp_path / "p.json", parabola_doc())
    out = str(tmp_path / "r.json")
    assert run("solve", "--input", inp, "--output", out).exit_code == 0
    return out


def test_verify_detects_perturbed_jet(tmp_path):
    out = solved_result(tmp_path)
    doc = json.loads(open(out).read())
    doc["function"]["leaves"][0]["piece"]["coeffs"][0] = "99"
    tampered = write_json(tmp_path / "t.json", doc)
    result = run("verify", "--result", tampered)
    assert result.exit_code == 3
    assert "FAIL" in result.output


def test_verify_detects_membership_violation(tmp_path):
    out = solved_result(tmp_path)
    doc = json.loads(open(out).read())
    # rewrite the constraint at the second point so the stored jet violates
    doc["problem"]["points"][1]["K"] = {
        "type": "hrep",
        "rows": [{"a": ["1", "0"], "b": "-100", "c": "0"}],
    }
    tampered = write_json(tmp_path / "t.json", doc)
    result = run("verify", "--result", tampered)
    assert result.exit_code == 3
    assert "membership at ['1']" in result.output


def test_verify_rejects_non_result_documents(tmp_path):
    path = write_json(tmp_path / "x.json", {"status": "unknown"})
    result = run("verify", "--result", path)
    assert result.exit_code == 3


# ---------------------------------------------------------------------------
# bench


def test_bench_suites_run():
    for suite in ("decompose", "select", "pou"):
        result = run("bench", "--suite", suite, "--seed", "1")
        assert result.exit_code == 0, all_output(result)
        assert "approx wall time" in result.output


def test_bench_unknown_suite():
    result = run("bench", "--suite", "nope")
    assert result.exit_code == 1
    assert "available" in all_output(result)
