import csv
import json

import numpy as np
import pytest

from nsiweak.cli import SCHEMA, fmt_float, run_command, to_json


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def load(path):
    with open(path / "report.json") as fh:
        return json.load(fh)


@pytest.mark.parametrize("x, text", [(0.1, "0.10000000000000001"), (2.0, "2.0"), (1e-300, "1e-300"), (1.0 / 3, "0.33333333333333331"),
                                     (float("inf"), '"inf"')])
def test_float_format(x, text):
    assert fmt_float(x) == text


def test_json_round_trip():
    obj = {"a": [0.1, 2, None, True], "b": {"c": np.float64(1 / 3)}}
    back = json.loads(to_json(obj))
    assert back["a"] == [0.1, 2, None, True] and back["b"]["c"] == 1 / 3


def test_cutoff_command(tmp_path):
    assert run_command(["cutoff", "--rect", "0,1,1,2", "--eta", "0.3", "--a", "1", "--out", str(tmp_path)]) == 0
    doc = load(tmp_path)
    assert doc["schema"] == SCHEMA and doc["passed"]
    consts = doc["constants"]
    assert {"c", "c_prime", "worst_Lf_margin"} <= consts.keys()
    assert consts["worst_Lf_margin"] > 0
    assert all(c["clause"] for c in doc["checks"])


def test_synth_command(tmp_path):
    argv = ["synth", "--rect", "0,1,1,2", "--profile", "linear:1,0", "--T", "1", "--eps", "0.1",
            "--nsi-samples", "100", "--out", str(tmp_path)]
    assert run_command(argv) == 0
    header, rows = read_csv(tmp_path / "energy.csv")
    assert header == ["t", "norm", "target", "deviation"]
    assert rows[:, 3].max() <= 0.1
    assert np.allclose(rows[:, 3], np.abs(rows[:, 1] - rows[:, 2]), rtol=0, atol=1e-15)


def test_verify_command(tmp_path):
    src = tmp_path / "synth"
    assert run_command(["synth", "--rect", "0,1,1,2", "--profile", "linear:1,0.5", "--eps", "0.2",
                        "--nsi-samples", "50", "--out", str(src)]) == 0
    out = tmp_path / "verify"
    assert run_command(["verify", "--manifest", str(src / "report.json"), "--nsi-samples", "50",
                        "--out", str(out)]) == 0
    names = [c["name"] for c in load(out)["checks"]]
    assert "rebuild_matches" in names and sum(n.startswith("lei[") for n in names) == 4


def test_cantor_invalid_xi(tmp_path):
    assert run_command(["cantor", "--tau", "1/3", "--M", "2", "--xi", "0.7", "--out", str(tmp_path)]) == 1
    doc = load(tmp_path)
    bad = [c for c in doc["checks"] if not c["passed"]]
    assert [c["name"] for c in bad] == ["params.tau_xi_M"]
    assert (tmp_path / "boxes.json").exists()


def test_cantor_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_command(["cantor", "--levels", "4", "--depth", "8", "--out", str(d)]) == 0
    for name in ("dimension.csv", "boxes.json", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header, rows = read_csv(a / "dimension.csv")
    assert header == ["log_inv_scale", "log_count"] and len(rows) == 8


def test_synth_deterministic_given_seed(tmp_path):
    argv = ["synth", "--rect", "0,1,1,2", "--profile", "linear:1,0.5", "--eps", "0.2", "--T", "1",
            "--nsi-samples", "40", "--seed", "7"]
    for d in ("a", "b"):
        assert run_command(argv + ["--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "energy.csv").read_bytes() == (tmp_path / "b" / "energy.csv").read_bytes()
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


@pytest.mark.parametrize("argv", [
    ["cutoff", "--rect", "0,1,1", "--eta", "0.3"],
    ["cutoff", "--rect", "0,1,1,2", "--eta", "0.7"],
    ["synth", "--rect", "0,1,1,2", "--profile", "linear:0,1", "--eps", "0.1"],
    ["cantor", "--tau", "one third"],
    ["nonsense"],
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    assert run_command(argv + ["--out", str(tmp_path)] if argv != ["nonsense"] else argv) == 2


def test_unwritable_output_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_command(["cantor", "--levels", "1", "--depth", "8", "--out", str(blocker / "sub")]) == 2


@pytest.mark.slow
def test_compose_command(tmp_path):
    assert run_command(["compose", "--profile", "linear:1,0", "--eps", "0.2", "--out", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert plan["T_prime"] < plan["T_double_prime"] < plan["T"]
