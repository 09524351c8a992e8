import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sideinfo.cli import main, parse_spec, problem_to_spec, dump_spec, SpecError
from sideinfo.problems import stuck_at

SPECS = Path(__file__).resolve().parent.parent / "specs"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_capacity_bsc(capsys):
    code, out, _ = run(capsys, "capacity", SPECS / "bsc.json")
    assert code == 0
    assert "capacity: 0.531004 bits" in out or "capacity: 0.531005 bits" in out


def test_capacity_oracle_and_csv(capsys, tmp_path):
    csv = tmp_path / "cap.csv"
    code, out, _ = run(capsys, "capacity", SPECS / "stuck_at.json", "--oracle", "--delta", "0.05", "--csv", csv)
    assert code == 0 and "oracle:" in out and "|diff|" in out
    lines = csv.read_text().splitlines()
    assert lines[0] == "instance,u_size,value_bits,oracle_bits,diff"
    name, u, val, orc, diff = lines[1].split(",")
    assert name == "stuck_at" and u == "2" and float(val) == pytest.approx(0.8, abs=1e-4)
    assert float(diff) == pytest.approx(abs(float(val) - float(orc)), abs=2e-6)


def test_small_u_size_is_flagged(capsys):
    code, out, _ = run(capsys, "capacity", SPECS / "stuck_at.json", "--u-size", "1")
    assert code == 0 and "warning: u_size=2 improves the value by 0.8" in out
    code, out, _ = run(capsys, "capacity", SPECS / "stuck_at.json")
    assert "u_size check: u_size=3 changes the value by 0.000000" in out
    code, out, _ = run(capsys, "capacity", SPECS / "stuck_at.json", "--no-u-check")
    assert "u_size" not in out.splitlines()[-1]


def test_rd_u_size_check(capsys):
    code, out, _ = run(capsys, "rd", SPECS / "hamming.json", "--d", "0.1", "--u-size", "1")
    assert code == 0 and "not reached with u_size=1" in out
    assert "warning: u_size=2 makes the target reachable" in out
    code, out, _ = run(capsys, "rd", SPECS / "hamming.json", "--d", "0.1")
    assert "warning" not in out and "u_size check" in out


def test_malformed_json_is_parse_error(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out, err = run(capsys, "capacity", bad)
    assert code == 2 and out == "" and "malformed JSON" in err


def test_validation_names_the_path(capsys, tmp_path):
    doc = json.loads((SPECS / "bsc.json").read_text())
    doc["channel"]["values"][0][0][0] = [0.7, 0.7]
    f = tmp_path / "v.json"
    f.write_text(json.dumps(doc))
    code, out, err = run(capsys, "capacity", f)
    assert code == 3 and out == "" and "channel" in err
    doc = json.loads((SPECS / "bsc.json").read_text())
    doc["state_joint"]["axes"] = ["s1", "y"]
    f.write_text(json.dumps(doc))
    code, _, err = run(capsys, "capacity", f)
    assert code == 3 and "state_joint.axes" in err


def test_axis_order_is_honoured():
    doc = problem_to_spec(stuck_at(), "s")
    k = np.array(doc["channel"]["values"])
    doc["channel"] = {"axes": ["y", "s2", "x", "s1"], "values": np.transpose(k, (3, 2, 0, 1)).tolist()}
    spec = parse_spec(json.dumps(doc))
    np.testing.assert_array_equal(spec.problem.kernel, stuck_at().kernel)
    assert parse_spec(dump_spec(problem_to_spec(stuck_at(), "s"))).problem.kernel.shape == (2, 3, 1, 2)


def test_wrong_kind(capsys):
    code, _, err = run(capsys, "rd", SPECS / "bsc.json", "--d", "0.1")
    assert code == 3 and "source" in err


def test_rd_point_and_infeasible(capsys, tmp_path):
    code, out, _ = run(capsys, "rd", SPECS / "hamming.json", "--d", "0.5")
    assert code == 0 and "= 0.000000 bits" in out
    code, _, err = run(capsys, "rd", SPECS / "hamming.json", "--d", "-0.1")
    assert code == 4 and "d_min" in err


def test_rd_sweep_csv(capsys, tmp_path):
    csv = tmp_path / "rd.csv"
    code, out, _ = run(capsys, "rd", SPECS / "hamming.json", "--sweep", "--csv", csv)
    assert code == 0 and "warning" not in out
    rows = [r.split(",") for r in csv.read_text().splitlines()]
    assert rows[0] == ["instance", "D", "R_bits", "lambda"]
    d = [float(r[1]) for r in rows[1:]]
    assert len(d) >= 2 and d == sorted(d)


def test_reduce(capsys):
    code, out, _ = run(capsys, "reduce", SPECS / "two_state.json", "--pattern", "00")
    assert code == 0 and "PASS" in out
    code, out, _ = run(capsys, "reduce", SPECS / "wyner_ziv.json", "--pattern", "10", "--d", "0.1")
    assert code == 0 and "PASS" in out
    code, _, err = run(capsys, "reduce", SPECS / "wyner_ziv.json", "--pattern", "01")
    assert code == 3


def test_simulate_single_trial(capsys, tmp_path):
    csv = tmp_path / "sim.csv"
    code, out, _ = run(capsys, "simulate", SPECS / "stuck_at.json", "--n", "4", "--rate", "0.4",
                       "--trials", "1", "--csv", csv)
    assert code == 0
    rows = csv.read_text().splitlines()
    assert rows[0] == "n,metric,ci,e1,e2,e3" and len(rows) == 2 and len(rows[1].split(",")) == 6


def test_simulate_budget_exit(capsys):
    code, _, err = run(capsys, "simulate", SPECS / "stuck_at.json", "--n", "30", "--rate", "0.4",
                       "--trials", "1", "--max-symbols", "100")
    assert code == 5


def test_seed_precedence(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SIDEINFO_SEED", "not-a-number")
    code, _, _ = run(capsys, "capacity", SPECS / "bsc.json")
    assert code == 3
    code, _, _ = run(capsys, "capacity", SPECS / "bsc.json", "--seed", "1")
    assert code == 0


def test_duality(capsys):
    code, out, _ = run(capsys, "duality", "--kind", "channel")
    assert code == 0
    assert "Y (received symbol)" in out and "X (source)" in out
    assert "C_10 <-> R_01" in out and "involution: PASS" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sideinfo.cli", "duality", "--kind", "source"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "R(D) = min" in r.stdout
