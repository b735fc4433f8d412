import json
import csv

import pytest

from relayshed.cli import (
    EXIT_CAP,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_USAGE,
    main,
)
from relayshed.instances import triad
from relayshed.netmodel import load_instance, save_instance


@pytest.fixture
def triad_path(tmp_path):
    net, relays = triad()
    path = tmp_path / "triad.json"
    save_instance(path, net, relays)
    return str(path)


def test_nflb_outputs(triad_path, capsys, tmp_path):
    out = tmp_path / "report.json"
    assert main(["nflb", triad_path, "--budget-count", "1", "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "NFLB: 2.00 pu" in stdout
    assert "restriction MILP value: 2.00 pu" in stdout
    doc = json.loads(out.read_text())
    assert doc["nflb_pu"] == pytest.approx(2.0)


def test_nflb_zero_and_full_budget(triad_path, capsys):
    assert main(["nflb", triad_path, "--budget-count", "0"]) == EXIT_OK
    assert "NFLB: 0.00 pu" in capsys.readouterr().out
    assert main(["nflb", triad_path, "--budget-count", "3"]) == EXIT_OK
    assert "NFLB: 2.00 pu" in capsys.readouterr().out


def test_nflb_budget_pct(triad_path, capsys):
    assert main(["nflb", triad_path, "--budget-pct", "33.4"]) == EXIT_OK
    assert "NFLB: 2.00 pu" in capsys.readouterr().out


def test_usage_errors(triad_path, capsys):
    assert main(["nflb", triad_path]) == EXIT_USAGE
    assert main(["nflb", triad_path, "--budget-count", "9"]) == EXIT_USAGE
    assert main(["nflb"]) == EXIT_USAGE  # missing instance argument


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["nflb", str(bad), "--budget-count", "1"]) == EXIT_PARSE
    assert main(["nflb", str(tmp_path / "missing.json"), "--budget-count", "1"]) == EXIT_PARSE


def test_gen_prop4(tmp_path, capsys):
    out = tmp_path / "p4.json"
    assert main(["gen", "prop4", str(out), "--n", "1"]) == EXIT_OK
    net, relays = load_instance(out)
    assert len(net.buses) == 3 and len(net.lines) == 3
    assert relays is not None and len(relays.relays) == 3


def test_gen_random_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "random", str(a), "--buses", "6", "--seed", "7"]) == EXIT_OK
    assert main(["gen", "random", str(b), "--buses", "6", "--seed", "7"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    net, _ = load_instance(a)
    assert len(net.buses) == 6 and net.is_connected


def test_theory_prop4(capsys):
    assert main(["theory", "prop4", "--n", "3"]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "PASS: flow-polytope feasible, DCOPF infeasible" in stdout
    assert "(7,9)" in stdout and "3.00" in stdout and "1.50" in stdout
    doc = json.loads(stdout[stdout.index("{"):])
    assert doc["pass"] and doc["check"] == "prop4"
    assert doc["saturation_flow"] == pytest.approx(3.0)


def test_theory_tu(triad_path, capsys):
    assert main(["theory", "tu", triad_path]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["pass"] and doc["exhaustive"]


def test_theory_duals(triad_path, capsys):
    assert main(["theory", "duals", triad_path, "--budget-count", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["pass"] and doc["max_abs_dual"] <= 1.0 + 1e-6


def test_theory_thm2(triad_path, capsys):
    assert main(["theory", "thm2", triad_path, "--trials", "15"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["pass"] and doc["applicable"] > 0


def test_theory_isf(triad_path, capsys):
    assert main(["theory", "isf", triad_path, "--trials", "5"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["pass"]


def test_theory_requires_instance(capsys):
    assert main(["theory", "tu"]) == EXIT_USAGE


def test_theory_cap_exceeded(triad_path, capsys):
    assert main(["theory", "duals", triad_path, "--budget-count", "2", "--cap", "2"]) == EXIT_CAP
    assert "cap exceeded" in capsys.readouterr().err


def test_sweep_runs_and_resumes(triad_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out_dir = tmp_path / "out"
    cfg.write_text(json.dumps({
        "instances": [triad_path],
        "budgets": [0, 50, 100],
        "formulations": ["eq4"],
        "time_limit_s": 60,
        "out_dir": str(out_dir),
    }))
    assert main(["sweep", str(cfg)]) == EXIT_OK
    with (out_dir / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert [float(r["nflb_pu"]) for r in rows] == pytest.approx([0.0, 2.0, 2.0])
    capsys.readouterr()
    assert main(["sweep", str(cfg)]) == EXIT_OK  # resume: no new rows
    with (out_dir / "sweep.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_sweep_empty_budgets_is_usage_error(triad_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instances": [triad_path], "budgets": []}))
    assert main(["sweep", str(cfg)]) == EXIT_USAGE
