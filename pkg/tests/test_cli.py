import csv
import io
import json

import pytest

from magkatok.cli import EXIT_CONFIG, EXIT_GATE, EXIT_OK, ConfigError, main, make_config, run


def run_cli(argv, capsys):
    status = main(argv)
    out = capsys.readouterr()
    return status, out.out, out.err


def table(text):
    body = "\n".join(ln for ln in text.splitlines() if not ln.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def test_verify_psi_identity(capsys):
    status, out, _ = run_cli(["verify-psi", "--s", "0", "--tol", "1e-10", "--n", "200"], capsys)
    assert status == EXIT_OK
    assert "# threshold lambda_pullback: 1e-06" in out
    assert "# result: PASS" in out


def test_converge_ratio(capsys):
    status, out, _ = run_cli(["converge", "--s", "1", "--N", "16"], capsys)
    assert status == EXIT_OK
    rows = table(out)
    assert len(rows) == 16
    assert abs(float(rows[-1]["ratio"]) - 1) < 1e-3


@pytest.mark.parametrize("cmd", ["katok-verify", "ellipsoid", "w-family"])
def test_suites_pass(cmd, capsys):
    status, out, _ = run_cli([cmd, "--n", "50", "--format", "json"], capsys)
    data = json.loads(out)
    assert status == EXIT_OK and data["passed"]
    assert data["thresholds"]


def test_simulate_trajectory(capsys):
    status, out, _ = run_cli(["simulate", "--system", "katok-h", "--s", "0.5", "--alpha", "0.2",
                              "--T", "3", "--samples", "7", "--start", "1.0,0.3,0.2,0.9"], capsys)
    assert status == EXIT_OK
    rows = table(out)
    assert list(rows[0]) == ["t", "theta", "phi", "p_theta", "p_phi", "chart", "energy"]
    assert len(rows) == 7


def test_gate_failure_exit_one(capsys):
    status, out, _ = run_cli(["verify-psi", "--s", "1", "--tol", "1e-18", "--n", "20"], capsys)
    assert status == EXIT_GATE
    assert "FAIL" in out


def test_byte_identical_reports(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["katok-verify", "--n", "30", "--rng-seed", "5", "--out", str(path)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert "PASS level_identity" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text("# census settings\ns = 0.5\nseeds = 12\nperiod_cap = 40\n")
    cfg = make_config(["orbits", "--config", str(cfg_file), "--seeds", "20"])
    assert cfg.s == 0.5 and cfg.period_cap == 40.0
    assert cfg.seeds == 20
    assert cfg.format == "json"
    assert cfg.alpha == pytest.approx(0.125**2 * 0.6180339887498949)


@pytest.mark.parametrize("text, needle", [
    ("s = 1\nseeds = many\n", ":2: field 'seeds'"),
    ("s = 1\n\nbogus = 3\n", ":3: unknown field 'bogus'"),
    ("k = -1\n", ":1: field 'k' out of range"),
    ("s = 1\nthis is not ini\n", ":2"),
])
def test_config_errors_report_line_and_field(tmp_path, capsys, text, needle):
    cfg_file = tmp_path / "bad.ini"
    cfg_file.write_text(text)
    status, _, err = run_cli(["converge", "--config", str(cfg_file)], capsys)
    assert status == EXIT_CONFIG
    assert needle in err


@pytest.mark.parametrize("argv", [
    ["converge", "--N", "zero"],
    ["orbits", "--alpha", "1.5"],
    ["nonsense"],
    ["simulate", "--start", "1,2"],
])
def test_bad_command_line(argv, capsys):
    status, _, err = run_cli(argv, capsys)
    assert status == EXIT_CONFIG
    assert err


def test_orbits_small_census(capsys):
    status, out, _ = run_cli(["orbits", "--seeds", "32", "--expect", "2"], capsys)
    data = json.loads(out)
    assert status == EXIT_OK
    assert len(data["orbits"]) == 2
    for key in ("system", "energy", "period_cap", "seeds", "totally_periodic"):
        assert key in data
    assert all(o["closure_defect"] < 1e-7 for o in data["orbits"])


def test_run_returns_report():
    status, rep = run(make_config(["ellipsoid", "--alpha", "0.0618034"]))
    assert status == EXIT_OK
    assert [c[0] for c in rep.checks] == ["axis_periods", "no_other_orbit"]
    # rational alpha = 3/10: every orbit closes at t = 20 pi < cap
    status, rep = run(make_config(["ellipsoid", "--alpha", "0.3"]))
    assert status == EXIT_GATE
    assert not rep.checks[1][3]
    with pytest.raises(ConfigError):
        make_config(["ellipsoid", "--alpha", "-0.1"])
