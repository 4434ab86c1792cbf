import csv
import io
import json
import subprocess
import sys

import pytest

from timebin_qss import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def scenario_file(tmp_path):
    def make(**kw):
        p = tmp_path / "scenario.json"
        p.write_text(json.dumps(kw))
        return str(p)

    return make


def test_parse_range():
    assert cli.parse_range("1..6") == range(1, 7)
    assert cli.parse_range("4") == range(1, 5)
    for bad in ("0..3", "5..2", "a"):
        with pytest.raises(Exception):
            cli.parse_range(bad)


def test_fig3_columns(capsys):
    code, out, _ = run(capsys, "fig3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["n", "alpha_min", "alpha_min_db", "alpha_thn", "alpha_thn_db"]
    assert [int(r["n"]) for r in rows] == [1, 2, 3, 4, 5, 6]


def test_thresholds(capsys):
    code, out, _ = run(capsys, "thresholds")
    d = json.loads(out)
    assert code == 0
    assert d["argmax_n"] == 2
    assert d["security_threshold_db"] == pytest.approx(-24.4, abs=0.05)
    assert d["loss_budget"]["total_length_km"] == pytest.approx(104, abs=1)


def test_thresholds_from_scenario(capsys, scenario_file):
    code, out, _ = run(capsys, "thresholds", scenario_file(mu=0.1, dark=1e-5, N=4))
    assert code == 0 and json.loads(out)["S"] == 0.5


def test_fig3_output_file(capsys, tmp_path):
    p = tmp_path / "fig3.csv"
    assert run(capsys, "fig3", "--n", "1..3", "-o", str(p))[0] == 0
    assert len(p.read_text().splitlines()) == 4


@pytest.mark.parametrize(
    "argv",
    [
        ["validate", "--trials", "0"],
        ["validate", "--only", "12"],
        ["simulate", "/nonexistent/scenario.json"],
        ["fig3", "--n", "0..2"],
        ["fig3", "-o", "/nonexistent/dir/out.csv"],
        ["attack", "--kind", "nobody"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("error:")


def test_unknown_key_reports_path(capsys, scenario_file):
    code, _, err = run(capsys, "simulate", scenario_file(mu=0.1, foo=1))
    assert code == 2
    assert "foo" in err


def test_bad_value_reports_path(capsys, scenario_file):
    code, _, err = run(capsys, "simulate", scenario_file(mu=1.5))
    assert code == 2 and "mu" in err


def test_minimal_scenario_and_db(capsys, scenario_file):
    path = scenario_file(mu=0.1, alpha_db=-26.2, dark=1e-5, N=4, session_slots=50_000)
    code, out, _ = run(capsys, "simulate", path)
    d = json.loads(out)
    assert code == 0
    assert d["scenario"]["S"] == 0.5
    assert d["scenario"]["alpha"] == pytest.approx(2.4e-3, rel=0.01)


def test_simulate_is_byte_identical(capsys, scenario_file):
    path = scenario_file(mu=0.1, alpha=0.2, dark=1e-5, N=4, session_slots=100_000, trials=2, seed=7)
    first = run(capsys, "simulate", path)[1]
    second = run(capsys, "simulate", path)[1]
    assert first == second


def test_override_precedence(capsys, scenario_file):
    path = scenario_file(mu=0.1, alpha=0.2, N=4, session_slots=50_000)
    out = json.loads(run(capsys, "simulate", path, "--alpha", "0.3", "--N", "5")[1])
    assert out["scenario"]["alpha"] == 0.3
    assert out["scenario"]["dims"] == [5]


def test_simulate_csv_and_key_bits(capsys, tmp_path):
    key = tmp_path / "key.txt"
    code, out, _ = run(capsys, "simulate", "--alpha", "0.3", "--slots", "50000", "--format", "csv", "--key-bits", str(key))
    assert code == 0
    assert out.startswith("name,analytic,mean")
    assert set(key.read_text().strip()) <= {"0", "1"}


def test_attack_output(capsys):
    code, out, _ = run(capsys, "attack", "--kind", "bob_ir_single", "--alpha", "0.1", "--slots", "500000")
    d = json.loads(out)
    assert code == 0
    assert d["scenario"]["adversary"]["kind"] == "bob_ir_single"
    assert d["totals"]["aborts"] == 1
    assert "error_resend_fraction" in d["estimates"]


def test_attack_infeasible_exits_2(capsys):
    code, _, err = run(capsys, "attack", "--kind", "bob_ir_sequential", "--n", "6", "--alpha", "0.01", "--slots", "50000")
    assert code == 2 and "error" in err


def test_validate_single_criterion(capsys, tmp_path):
    out = tmp_path / "v.json"
    code, text, _ = run(capsys, "validate", "--only", "4", "-o", str(out))
    assert code == 0
    assert "criterion 4: PASS" in text
    assert json.loads(out.read_text())["passed"] is True


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "timebin_qss", "fig3", "--n", "2"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0].startswith("n,alpha_min")
