import json
import math

import pytest

from lab_service.field_io import read_field
from lplab.main import run

FAST = ["--probe-pairs", "2", "--quad-nodes", "8", "--max-iter", "30"]


def read_report(path):
    return json.loads(path.read_text())


def test_selftest_passes(capsys):
    assert run(["selftest"]) == 0
    assert capsys.readouterr().out.strip() == "12/12 checks passed"


def test_norm_of_constant(capsys):
    assert run(["norm", "--space", "lebesgue:p=3", "--u0", "builtin:constant"]) == 0
    value = float(capsys.readouterr().out.strip())
    assert value == pytest.approx((2 * math.pi) ** (2 / 3), rel=1e-10)


def test_norm_report(tmp_path):
    out = tmp_path / "norm.json"
    assert run(["norm", "--space", "besov:s=-1,p=inf,q=inf", "--u0", "builtin:plane-wave", "--out", str(out)]) == 0
    report = read_report(out)
    assert report["command"] == "norm"
    assert report["config"]["space"] == "besov:s=-1,p=inf,q=inf"
    assert report["result"]["value"] == pytest.approx(0.25)
    assert report["result"]["invariant"] is True


@pytest.mark.parametrize(
    "argv",
    [["--no-such-flag"], ["norm", "--bogus"], [], ["counterexample"], ["norm", "--dim", "two"]],
)
def test_usage_errors(argv):
    assert run(argv) == 64


@pytest.mark.parametrize(
    "argv",
    [
        ["norm"],
        ["norm", "--space", "sobolev:s=1"],
        ["norm", "--space", "lebesgue:p=2", "--u0", "builtin:nothing"],
        ["norm", "--space", "lebesgue:p=2", "--points", "48"],
        ["selftest", "--threads", "0"],
    ],
)
def test_lab_errors(argv):
    assert run(argv) == 2


def test_decompose_is_deterministic(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["decompose", "--seed", "4", "--csv", str(first)]) == 0
    assert run(["decompose", "--seed", "4", "--csv", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().splitlines()[0] == "j,sup_norm,l2_norm"


def test_decompose_report(tmp_path):
    out = tmp_path / "decompose.json"
    assert run(["decompose", "--u0", "builtin:plane-wave", "--out", str(out)]) == 0
    result = read_report(out)["result"]
    assert result["active_bands"] == [2]
    assert result["reconstruction_error"] <= 1e-12
    assert result["partition_residual"] <= 1e-12


def test_config_file_and_flag_override(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"points": 32, "seed": 9}))
    out = tmp_path / "report.json"
    assert run(["decompose", "--config", str(config), "--seed", "2", "--out", str(out)]) == 0
    echoed = read_report(out)["config"]
    assert echoed["points"] == 32
    assert echoed["seed"] == 2


def test_bad_config_file(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"pointz": 32}))
    assert run(["decompose", "--config", str(config)]) == 2


def test_solve_small_datum(tmp_path):
    out, field_out, csv = tmp_path / "solve.json", tmp_path / "u.lpf", tmp_path / "res.csv"
    argv = ["solve", "--u0", "builtin:small", "--amplitude", "1e-6", "--tol", "1e-12"] + FAST
    argv += ["--out", str(out), "--field-out", str(field_out), "--csv", str(csv)]
    assert run(argv) == 0
    result = read_report(out)["result"]
    assert result["converged"] is True
    assert result["margin"] < 1.0
    field, sidecar = read_field(field_out)
    assert sidecar.command == "solve"
    assert csv.read_text().splitlines()[0] == "iteration,residual"


def test_solve_refuses_large_datum(tmp_path):
    out = tmp_path / "refused.json"
    argv = ["solve", "--u0", "builtin:large-low", "--amplitude", "1e4", "--out", str(out)] + FAST
    assert run(argv) == 3
    assert read_report(out)["result"]["status"] == "refused"


def test_series_report(tmp_path):
    csv = tmp_path / "series.csv"
    argv = ["series", "--u0", "builtin:small", "--amplitude", "1e-4", "--K", "3", "--csv", str(csv)] + FAST
    assert run(argv) == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "k,term_norm,catalan_bound"
    assert len(lines) == 4


def test_prop19_quotients(tmp_path):
    out = tmp_path / "prop19.json"
    assert run(["counterexample", "prop19", "--points", "128", "--out", str(out)]) == 0
    report = read_report(out)
    assert report["command"] == "counterexample prop19"
    assert report["result"]["quotients"] == pytest.approx([4.0] * 3, rel=1e-10)
    assert all(row["ratio"] >= row["floor"] for row in report["result"]["rows"])


def test_blowup_alias_still_runs(capsys):
    assert run(["counterexample", "blowup", "--points", "128", "--ks", "1:2"]) == 0
    assert capsys.readouterr().out.startswith("consecutive quotients ")


def test_pairing_command(tmp_path):
    out = tmp_path / "pairing.json"
    csv = tmp_path / "pairing.csv"
    argv = ["counterexample", "pairing", "--points", "256", "--at", "1,2", "--quad-nodes", "8"]
    assert run(argv + ["--out", str(out), "--csv", str(csv)]) == 0
    result = read_report(out)["result"]
    assert result["shells"] == [2, 3]
    assert len(result["rows"]) == 2
    assert all(math.isfinite(row["value"]) for row in result["rows"])
    assert "report only" in result["summary"]
    assert csv.read_text().splitlines()[0] == "x1,value,imag,b_sup,ratio"


def test_delta_sequence_command(tmp_path):
    out = tmp_path / "delta.json"
    assert run(["counterexample", "delta-seq", "--eta-len", "32", "--out", str(out)]) == 0
    result = read_report(out)["result"]
    assert result["hypothesis_holds"] is True
    assert result["min_slack"] >= -1e-15
    assert all(0.5 <= r <= 2.0 for r in result["harmonic_ratio"].values())


def test_lacunary_needs_a_pattern():
    assert run(["counterexample", "lacunary", "--points", "256", "--period", "16", "--shells", "2:3", "--patterns", "0"]) == 2


def test_kernel_command(capsys):
    assert run(["counterexample", "kernel", "--dim", "3", "--count", "5"]) == 0
    assert capsys.readouterr().out.startswith("β = ")


def test_dini_command(capsys):
    assert run(["microlocal", "dini", "--dim", "3", "--oracle", "point"]) == 0
    assert "Dini passes" in capsys.readouterr().out
    assert run(["microlocal", "dini", "--dim", "3", "--oracle", "inverse-log"]) == 0
    assert "Dini fails" in capsys.readouterr().out


def test_density_command_needs_a_set():
    assert run(["microlocal", "density", "--set", "empty"]) == 2


def test_diagnostics_refuse_bands_above_j_max():
    assert run(["diagnostics", "--u0", "builtin:small", "--bands", "4:5"]) == 2
