import asyncio
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import cli
import conformal_core
from conformal_core import (
    InputError,
    TaskResult,
    load_metric,
    parse_probes,
    parse_window,
    process_check_results,
    run_checks,
)
from planewave import CheckRow

ROOT = Path(__file__).parent


def sample(name):
    return str(ROOT / name)


def run_structured(capsys, *argv):
    code = cli.run([*argv, "--format", "structured", "--quiet"])
    out = capsys.readouterr().out
    return code, json.loads(out)


def checks_by_name(doc):
    return {row["check"]: row for row in doc["checks"]}


def table(doc, title):
    return next(t["rows"] for t in doc["tables"] if t["title"] == title)


# ============ end-to-end commands ============


def test_planewave_verify_regular_spec_passes(capsys):
    code, doc = run_structured(capsys, "planewave-verify", "--spec", sample("regular_ds.json"))
    assert code == 0
    assert doc["passed"]
    checks = checks_by_name(doc)
    for name in ("parallel-null", "R(X,Y)=0 on perp", "nabla_X R=0 on perp"):
        assert checks[name]["residual"] < 1e-7
        assert checks[name]["tol"] == pytest.approx(1e-7)
    kinds = {row["field"]: row["kind"] for row in table(doc, "fields")}
    assert kinds["homothety"] == "homothetic"


@pytest.mark.parametrize("name", ["generic_wave.json", "singular_wave.json"])
def test_planewave_verify_other_families(capsys, name):
    code, doc = run_structured(capsys, "planewave-verify", "--spec", sample(name))
    assert code == 0
    assert all(row["passed"] for row in doc["checks"])


def test_jordan_of_shear(capsys):
    code, doc = run_structured(capsys, "jordan", "--matrix", sample("shear.json"))
    assert code == 0
    B_u = np.array([[row[k] for k in sorted(row, key=int)] for row in table(doc, "B_u")])
    B_s = np.array([[row[k] for k in sorted(row, key=int)] for row in table(doc, "B_s")])
    np.testing.assert_allclose(B_u, [[1.0, 1.0], [0.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(B_s, np.eye(2), atol=1e-12)


def test_penrose_of_rosen_reproduces_input(capsys):
    code, doc = run_structured(capsys, "penrose", "--metric", sample("rosen.json"))
    assert code == 0
    assert checks_by_name(doc)["limit = input Rosen profile"]["residual"] < 1e-14
    limit, given = table(doc, "limit profile"), table(doc, "input profile")
    assert len(limit) == len(given)
    for a, b in zip(limit, given):
        assert a == pytest.approx(b, abs=1e-14)
    assert all(row["deviation"] < 1e-14 for row in table(doc, "rescaling"))


def test_penrose_of_minkowski_is_flat(capsys):
    code, doc = run_structured(capsys, "penrose", "--metric", sample("minkowski.json"))
    assert code == 0
    assert table(doc, "limit curvature")[0]["max_riemann_on_central_line"] < 1e-9


def test_penrose_conformal_on_rosen(capsys):
    code, doc = run_structured(
        capsys, "penrose-conformal", "--metric", sample("rosen.json"), "--sigma", "0.2*sin(u) + 0.1*x1"
    )
    assert code == 0
    checks = checks_by_name(doc)
    for name in ("G*g_sigma transverse=PL[g_sigma]", "phi^*PL[g_sigma]=Kbar*PL[g]"):
        assert checks[name]["residual"] < 1e-8


def test_weyl_dichotomy_between_builtin_families(capsys):
    code, doc = run_structured(capsys, "weyl", "--metric", sample("de_sitter.json"))
    assert code == 0
    assert max(row["weyl"] for row in table(doc, "weyl")) < 1e-8

    code, doc = run_structured(capsys, "weyl", "--metric", sample("sphere_product.json"))
    assert code == 1
    assert not doc["passed"]


def test_weyl_covariance_with_sigma(capsys):
    code, doc = run_structured(capsys, "weyl", "--metric", sample("de_sitter.json"), "--sigma", "0.3*tau + 0.1*x^2")
    assert code == 0
    assert checks_by_name(doc)["W(e^sigma g) = W(g)"]["residual"] < 1e-8


def test_curvature_of_minkowski_vanishes(capsys):
    code, doc = run_structured(capsys, "curvature", "--metric", sample("minkowski.json"), "--probes", "-1,1,3x0,1,2")
    assert code == 0
    rows = table(doc, "curvature")
    assert len(rows) == 6
    assert all(row["riemann"] == 0.0 for row in rows)
    assert {row["x1"] for row in rows} == {0.0}


@pytest.mark.parametrize("name", ["de_sitter.json", "sphere_product.json", "rosen.json"])
def test_curvature_reports_identity_residuals(capsys, name):
    code, doc = run_structured(capsys, "curvature", "--metric", sample(name))
    assert code == 0
    rows = [row for row in doc["checks"] if row["stage"] == "identities"]
    assert len(rows) == len(table(doc, "curvature"))
    assert all(row["residual"] < 1e-9 and row["tol"] == pytest.approx(1e-9) for row in rows)


def test_killing_check_on_declared_fields(capsys):
    code, doc = run_structured(capsys, "killing-check", "--metric", sample("minkowski.json"))
    assert code == 0
    kinds = {row["field"]: row["kind"] for row in table(doc, "fields")}
    assert kinds == {
        "translation_u": "killing",
        "rotation_x": "killing",
        "null_rotation": "killing",
        "dilation": "homothetic",
    }
    constants = {row["field"]: row["constant"] for row in table(doc, "fields")}
    assert constants["dilation"] == pytest.approx(2.0, abs=1e-8)


def test_killing_check_flags_wrong_expectation(tmp_path, capsys):
    path = tmp_path / "wrong.json"
    path.write_text(json.dumps({"family": "minkowski", "fields": {"dil": {"components": ["u", "v", "x1", "x2"], "expect": "killing"}}}))
    code, doc = run_structured(capsys, "killing-check", "--metric", str(path))
    assert code == 1
    assert not checks_by_name(doc)["dil: kind homothetic (expected killing)"]["passed"]


def test_killing_check_from_spec(capsys):
    code, doc = run_structured(capsys, "killing-check", "--spec", sample("regular_ds.json"))
    assert code == 0
    assert doc["summary"]["fields"] == 7


def test_rosen_convert_reports_dichotomy(capsys):
    code, doc = run_structured(capsys, "rosen-convert", "--spec", sample("regular_ds.json"), "--window", "-0.5,0.5")
    assert code == 0
    checks = checks_by_name(doc)
    assert checks["xi-tangent limit flat"]["residual"] < 1e-9
    assert len(table(doc, "rosen profile")) == 9


def test_rosen_convert_conjugate_point_fails(tmp_path, capsys):
    path = tmp_path / "focusing.json"
    path.write_text(json.dumps({"family": "generic", "Q_expr": [["-1"]]}))
    code = cli.run(["rosen-convert", "--spec", str(path), "--window", "0,2", "--quiet"])
    assert code == 1
    assert "conjugate point" in capsys.readouterr().err


def test_grade_abstract_heisenberg(capsys):
    code, doc = run_structured(capsys, "grade", "--algebra", sample("heisenberg.json"))
    assert code == 0
    spectrum = [(row["eigenvalue"], row["multiplicity"]) for row in table(doc, "spectrum")]
    assert spectrum == [(1.0, 2), (2.0, 1)]


def test_grade_parabolic_by_boost(capsys):
    code, doc = run_structured(capsys, "grade", "--algebra", sample("p_plus.json"))
    assert code == 0
    spectrum = [(row["eigenvalue"], row["multiplicity"]) for row in table(doc, "spectrum")]
    assert spectrum == [(0.0, 1), (1.0, 1)]


def test_grade_alpha_outside_so_is_input_error(capsys):
    assert cli.run(["grade", "--algebra", sample("p_plus.json"), "--alpha", "0.5", "--quiet"]) == 2


@pytest.mark.parametrize("alpha, branch", [(1.0, "heisenberg"), (0.5, "heisenberg"), (0.3, "conformally_flat")])
def test_spectrum_branch(capsys, alpha, branch):
    code, doc = run_structured(capsys, "spectrum", "--alpha", str(alpha))
    assert code == 0
    assert doc["summary"]["branch"] == branch
    assert sum(row["multiplicity"] for row in table(doc, "sigma_B")) == 6
    checks = checks_by_name(doc)
    assert doc["summary"]["n"] == [1, 2, 3]
    for n in (1, 2, 3):
        assert checks[f"s^mu(V^nu) in V^(mu+nu) [n={n}]"]["passed"]
        assert checks[f"ad_B spectrum on co(1,{n + 1}) = {{-1, 0, 1}}"]["passed"]
        # dim co(1, n+1) = (n+2)(n+1)/2 + 1
        rows = table(doc, f"ad_B on co(1,{n + 1})")
        assert sum(row["multiplicity"] for row in rows) == (n + 2) * (n + 1) // 2 + 1


def test_null_lines_of_parabolic(capsys):
    code, doc = run_structured(capsys, "null-lines", "--algebra", sample("p_plus.json"))
    assert code == 0
    lines = table(doc, "null lines")
    assert len(lines) == 1
    assert [lines[0]["e0"], lines[0]["e1"], lines[0]["e2"]] == pytest.approx([1.0, 0.0, 0.0], abs=1e-9)


def test_null_lines_need_matrix_algebra(capsys):
    assert cli.run(["null-lines", "--algebra", sample("heisenberg.json"), "--quiet"]) == 2


# ============ reports ============


def test_structured_reports_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["planewave-verify", "--spec", sample("generic_wave.json"), "--quiet"]
    assert cli.run(argv + ["--out", str(a)]) == 0
    assert cli.run(argv + ["--out", str(b)]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["seed"] == 42
    assert doc["engine_version"] == conformal_core.__version__
    assert "wall_time" not in doc


def test_structured_report_records_input_digest(capsys):
    path = sample("shear.json")
    code, doc = run_structured(capsys, "jordan", "--matrix", path)
    assert code == 0
    assert doc["inputs"] == [{"path": path, "sha256": hashlib.sha256(Path(path).read_bytes()).hexdigest()}]
    assert doc["argv"][:3] == ["jordan", "--matrix", path]


def test_seed_is_echoed(capsys):
    code, doc = run_structured(capsys, "weyl", "--metric", sample("de_sitter.json"), "--seed", "7")
    assert code == 0
    assert doc["seed"] == 7


def test_text_report_layout(capsys):
    assert cli.run(["jordan", "--matrix", sample("shear.json"), "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "command: jordan" in out
    assert "---- B_s ----" in out
    assert "verdict: PASS" in out
    assert "wall time:" in out


def test_text_report_uses_twelve_digits(capsys):
    assert cli.run(["spectrum", "--alpha", "0.123456789012345", "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "0.123456789012" in out


# ============ input errors ============


def test_missing_file_is_input_error(capsys):
    assert cli.run(["jordan", "--matrix", "does_not_exist.json", "--quiet"]) == 2
    assert "file not found" in capsys.readouterr().err


def test_bad_json_reports_location(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"matrix": [[1, 2],\n [3 4]]}')
    assert cli.run(["jordan", "--matrix", str(path), "--quiet"]) == 2
    assert "line 2" in capsys.readouterr().err


def test_expression_error_is_input_error(tmp_path, capsys):
    path = tmp_path / "rosen.json"
    path.write_text(json.dumps({"family": "rosen", "profile": [["1 + ", "0"], ["0", "1"]]}))
    assert cli.run(["penrose", "--metric", str(path), "--quiet"]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["jordan", "--matrix", "shear.json", "--bogus"],
        ["spectrum", "--alpha", "not-a-number"],
        [],
    ],
)
def test_bad_command_lines(argv, capsys):
    assert cli.run(argv) == 2


def test_missing_required_flag(capsys):
    assert cli.run(["jordan", "--quiet"]) == 2
    assert "needs --matrix" in capsys.readouterr().err


def test_unknown_metric_family(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"family": "kerr"}))
    with pytest.raises(InputError, match="unknown metric family"):
        load_metric(path)


def test_singular_matrix_is_engine_failure(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps([[1.0, 2.0], [2.0, 4.0]]))
    assert cli.run(["jordan", "--matrix", str(path), "--quiet"]) == 1


def test_non_adapted_chart_is_engine_failure(capsys):
    assert cli.run(["penrose", "--metric", sample("de_sitter.json"), "--quiet"]) == 1


# ============ probes and windows ============


def test_parse_probes_product_grid():
    points = parse_probes("0,1,3x-1,1,2", 4)
    assert len(points) == 6
    assert all(p[2] == 0.0 and p[3] == 0.0 for p in points)
    assert sorted({p[0] for p in points}) == [0.0, 0.5, 1.0]


def test_parse_probes_accepts_times_sign():
    assert len(parse_probes("0,1,2 × 0,1,2 × 0,1,2", 3)) == 8


@pytest.mark.parametrize("text", ["0,1", "0,1,0", "a,b,c", "0,1,2x0,1,2x0,1,2x0,1,2", ""])
def test_parse_probes_rejects(text):
    with pytest.raises(InputError):
        parse_probes(text, 3)


def test_parse_window():
    assert parse_window("0.5,2") == (0.5, 2.0)
    with pytest.raises(InputError):
        parse_window("2,1")


# ============ fan-out ============


def test_fan_out_keeps_order_and_captures_errors():
    def ok(value):
        return lambda: TaskResult([CheckRow("s", f"c{value}", value, 1.0)])

    def boom():
        raise RuntimeError("probe exploded")

    results = asyncio.run(run_checks([("a", ok(0.5)), ("b", boom), ("c", ok(2.0))]))
    assert [r["task"] for r in results] == ["a", "b", "c"]
    checks, tables = process_check_results(results)
    assert list(checks["task"]) == ["a", "b", "c"]
    assert list(checks["passed"]) == [True, False, False]
    assert checks.loc[1, "error"] == "probe exploded"
    assert tables == []


def test_fan_out_merges_tables_by_title():
    def part(i):
        return lambda: TaskResult([], [("rows", pd.DataFrame([{"i": i}]))])

    results = asyncio.run(run_checks([(str(i), part(i)) for i in range(3)]))
    _, tables = process_check_results(results)
    assert [t for t, _ in tables] == ["rows"]
    assert list(tables[0][1]["i"]) == [0, 1, 2]


# ============ logging ============


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv(cli.LOG_LEVEL_ENV, "debug")
    cli.configure_logging()
    assert logging.getLogger().level == logging.DEBUG


def test_quiet_logging(monkeypatch):
    monkeypatch.delenv(cli.LOG_LEVEL_ENV, raising=False)
    cli.configure_logging(quiet=True)
    assert logging.getLogger().level == logging.WARNING
