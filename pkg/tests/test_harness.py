import csv
import io
import json
import math

import pytest
from click.testing import CliRunner

from chordarc.cli import main
from chordarc.errors import ConfigError
from chordarc.harness.config import parse_config
from chordarc.harness.experiments import dyadic_boxes, run, sewing_exponent
from chordarc.harness.report import (COLUMNS, UNSUPPORTED, Check, ReportRow, csv_columns, emit_report,
                                     rows_from_json, to_csv, to_json, to_svg)


# ---- config


def test_defaults():
    cfg = parse_config({"kind": "energy"})
    assert cfg.p == [2.0] and cfg.n == [1] and cfg.domain.type == "halfplane"
    assert cfg.quadrature.spec().rel_tol == 1e-6
    assert cfg.domain_texts() == [({}, "halfplane")]


def test_every_violation_is_reported():
    bad = {"kind": "equivalence", "domain": {"type": "grating", "c": 1.3}, "p": [2, 0.5], "n": [4],
           "sweep": {"param": "c", "values": []}}
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    paths = [p for p, _ in exc.value.errors]
    assert {"domain.c", "p", "n", "sweep.values"} <= set(paths)


@pytest.mark.parametrize("bad,path", [
    ({"kind": "nope"}, "kind"),
    ({"kind": "energy", "domain": {"type": "sector"}}, "domain"),
    ({"kind": "energy", "functions": ["pole(w=1i"]}, "functions"),
    ({"kind": "energy", "quadrature": {"rel_tol": 0}}, "quadrature.rel_tol"),
    ({"kind": "energy", "unknown": 1}, "unknown"),
    ({"kind": "tail", "eps": [3.0]}, "eps"),
    ({"kind": "carleson", "lusin_intervals": [[1, 0]]}, "lusin_intervals"),
])
def test_single_violation_paths(bad, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    assert path in [p for p, _ in exc.value.errors]


def test_invalid_json_text():
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_sweep_expands_domains():
    cfg = parse_config({"kind": "equivalence", "domain": {"type": "grating", "c": 0.0},
                        "sweep": {"param": "c", "values": [0.0, 0.5]}})
    assert cfg.domain_texts() == [({"c": 0.0}, "grating:c=0.0"), ({"c": 0.5}, "grating:c=0.5")]


# ---- reports


def _rows():
    checks = {"finite": Check("value", 0.0, None)}
    return [ReportRow("energy", "a", "halfplane", {}, "pole(w=-1i)", 2.0, 1,
                      {"value": math.pi / 4, "quadrature_error": 1e-12, "truncation_tail": 0.0}, {}, checks),
            ReportRow("energy", "b", "grating:c=0.6", {"c": 0.6}, "pole(w=-2i)", 3.0, 2,
                      {"value": None}, {}, checks, "TruncationError: x")]


def test_check_semantics():
    c = Check("x", 1.0, 2.0)
    assert c.evaluate({"x": 1.5}) is True
    assert c.evaluate({"x": 2.5}) is False
    assert c.evaluate({"x": None}) is False
    assert c.evaluate({"x": math.nan}) is False
    assert c.evaluate({"x": UNSUPPORTED}) == UNSUPPORTED


def test_csv_header_and_rows():
    text = to_csv(_rows())
    recs = list(csv.reader(io.StringIO(text)))
    assert recs[0] == csv_columns(_rows())
    assert recs[0][:7] == ["experiment", "row_id", "domain", "params", "function", "p", "n"]
    assert len(recs) == 3
    first = dict(zip(recs[0], recs[1]))
    assert float(first["value"]) == math.pi / 4  # repr round-trips exactly
    assert first["flag_finite"] == "true"
    second = dict(zip(recs[0], recs[2]))
    assert second["flag_finite"] == "false" and second["params"] == "c=0.6"


def test_csv_rejects_undocumented_columns():
    row = _rows()[0]
    row.values["mystery"] = 1.0
    with pytest.raises(ValueError):
        to_csv([row])
    row = _rows()[0]
    row.errors["mystery"] = 1.0
    with pytest.raises(ValueError):
        to_csv([row])
    with pytest.raises(ValueError):
        to_csv([])


def test_every_kind_has_documented_columns():
    for kind, (values, flags) in COLUMNS.items():
        assert len(set(values)) == len(values)
        assert set(flags) and all(isinstance(f, str) for f in flags)


def test_json_roundtrip():
    rows = _rows()
    back = rows_from_json(to_json(rows))
    assert [r.to_json() for r in back] == [r.to_json() for r in rows]


def test_json_tampered_flags_rejected():
    data = json.loads(to_json(_rows()))
    data[1]["flags"]["finite"] = True
    with pytest.raises(ValueError):
        rows_from_json(json.dumps(data))


def test_svg_one_polyline_per_series():
    rows = []
    for p in (1.5, 2.0):
        for n in (1, 2):
            for c in (0.0, 0.3, 0.6):
                rows.append(ReportRow("equivalence", f"{p}{n}{c}", "g", {"c": c}, "f", p, n, {"In/I1": 1 + c * n / p}))
    svg = to_svg(rows, "In/I1", "c")
    assert svg.count("<polyline") == 4
    assert svg == to_svg(list(reversed(rows)), "In/I1", "c")
    with pytest.raises(ValueError):
        to_svg(rows, "missing", "c")


def test_emit_report_formats(tmp_path):
    path = emit_report(_rows(), "csv", tmp_path / "deep" / "r.csv")
    assert path.read_text() == to_csv(_rows())
    with pytest.raises(ValueError):
        emit_report(_rows(), "xml", tmp_path / "r.xml")
    with pytest.raises(ValueError):
        emit_report(_rows(), "svg", tmp_path / "r.svg")


# ---- runners


def test_energy_runner_halfplane():
    cfg = parse_config({"kind": "energy", "p": [2.0], "functions": ["pole(w=-1i)"]})
    rows = run(cfg)
    assert len(rows) == 1
    assert rows[0].values["value"] == pytest.approx(math.pi / 4, rel=1e-6)
    assert rows[0].failed() == []


def test_runner_reports_failures_as_flags():
    cfg = parse_config({"kind": "energy", "functions": ["pole(w=-0.01i)"]})
    row = run(cfg)[0]
    assert row.values["value"] is None and row.failed() == ["finite"]
    assert "DomainError" in row.notes


def test_unsupported_cells():
    cfg = parse_config({"kind": "sewing", "domain": {"type": "grating", "c": 0.3}})
    row = run(cfg)[0]
    assert row.values["qs_constant"] == UNSUPPORTED
    assert row.flags == {"qs": UNSUPPORTED}
    assert row.failed() == []


def test_runs_are_deterministic_and_job_independent():
    base = {"kind": "energy", "p": [1.5, 3.0], "n": [1, 2], "functions": ["pole(w=-1i)", "pole(w=1-2i)"]}
    a = to_csv(run(parse_config(base)))
    b = to_csv(run(parse_config(base)))
    c = to_csv(run(parse_config(dict(base, jobs=2))))
    assert a == b == c


def test_dyadic_boxes():
    assert dyadic_boxes([1.0, 4.0]) == [(-0.5, 0.5), (-2.0, 2.0)]
    fine = dyadic_boxes([1.0, 4.0], level=1)
    sizes = sorted({round(b - a, 12) for a, b in fine})
    assert sizes == [1.0, 2.0, 4.0]


def test_sewing_exponent_of_power():
    assert sewing_exponent(lambda x: 3 * x ** 0.7) == pytest.approx(0.7, abs=1e-12)


# ---- command line


def test_cli_energy_writes_reports(tmp_path):
    res = CliRunner().invoke(main, ["energy", "--p", "2", "--function", "pole(w=-1i)", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "ok" in res.output
    text = (tmp_path / "run_energy.csv").read_text()
    assert text.splitlines()[0].startswith("experiment,row_id")
    assert rows_from_json((tmp_path / "run_energy.json").read_text())[0].p == 2.0


def test_cli_failing_check_exits_1(tmp_path):
    res = CliRunner().invoke(main, ["energy", "--function", "pole(w=-0.01i)", "--out", str(tmp_path)])
    assert res.exit_code == 1
    assert "FAIL" in res.output


def test_cli_config_error_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "energy", "p": [0.5], "n": [7]}))
    res = CliRunner().invoke(main, ["energy", "--config", str(cfg), "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert "config error at p" in res.output and "config error at n" in res.output


def test_cli_config_kind_mismatch(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "tail"}))
    res = CliRunner().invoke(main, ["energy", "--config", str(cfg)])
    assert res.exit_code != 0 and "does not match" in res.output


def test_cli_domain_override_and_svg(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "sewing", "domain": {"type": "sector", "alpha": 1.0},
                               "sweep": {"param": "alpha", "values": [0.5, 1.0, 1.5]},
                               "output": {"formats": ["csv", "svg"]}}))
    res = CliRunner().invoke(main, ["sewing", "--config", str(cfg), "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "run_sewing.svg").read_text().count("<polyline") == 1
    res = CliRunner().invoke(main, ["tail", "--domain", "sector:alpha=1.5", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "sector:alpha=1.5" in (tmp_path / "run_tail.csv").read_text()
