import csv
import io
import json
import subprocess
import sys

import pytest

from quditghz.cli import main
from quditghz.scheme import psuc_formula


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_worked_example(capsys):
    code, out, _ = run(capsys, "simulate", "--N", "3", "--d", "3", "--t", "0.5773502692")
    assert code == 0
    data = json.loads(out)
    assert data["eq7_value"] == pytest.approx(3.6e-4, rel=0.01)
    assert {"p_single", "p_aggregate", "eq7_match", "outcomes"} <= set(data)


def test_simulate_bell(capsys):
    code, out, _ = run(capsys, "simulate", "--N", "2", "--d", "2", "--t", "1.0")
    assert code == 0
    data = json.loads(out)
    assert data["eq7_value"] == 0.125
    assert data["eq7_match"] == "aggregate"


def test_simulate_capacity_error(capsys):
    code, _, err = run(capsys, "simulate", "--N", "2", "--d", "10")
    assert code == 3
    assert "12" in err


def test_permanent_engine(capsys):
    code, out, _ = run(capsys, "simulate", "--N", "2", "--d", "3", "--engine", "permanent")
    assert code == 0
    data = json.loads(out)
    assert data["p_single"] == pytest.approx(psuc_formula(2, 3) / 3**4, rel=1e-9)
    assert data["reference_fidelity"] >= 1 - 1e-9
    code, _, _ = run(capsys, "simulate", "--N", "3", "--d", "6", "--engine", "permanent")
    assert code == 3


@pytest.mark.parametrize(
    "argv",
    [
        ("simulate", "--N", "2", "--d", "2", "--t", "1.5"),
        ("simulate", "--N", "1", "--d", "2"),
        ("simulate", "--d", "3"),
        ("probe-min", "--N", "2", "--d", "2"),
        ("compile-multirail", "--N", "2", "--d", "2", "--format", "csv"),
    ],
)
def test_parameter_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("parameter error")


def test_table(capsys):
    code, out, _ = run(capsys, "table")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["N", "d", "photons", "p_suc", "log10_p_suc"]
    assert len(rows) == 15
    by = {(int(r["N"]), int(r["d"])): r for r in rows}
    assert float(by[2, 3]["log10_p_suc"]) == pytest.approx(-2.1, abs=0.05)
    assert float(by[3, 3]["log10_p_suc"]) == pytest.approx(-3.4, abs=0.05)
    code, out, _ = run(capsys, "table", "--d-list", "2", "--N-list", "2,3")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["p_suc"]) for r in rows] == [2 / 16, 2 / 64]


def test_compare_ztl(capsys):
    code, out, _ = run(capsys, "compare-ztl")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["d"]) for r in rows] == list(range(2, 9))
    first = rows[0]
    assert (int(first["ours_photons"]), int(first["ztl_photons"])) == (4, 5)
    assert float(first["ours_psuc"]) == 0.125
    assert float(first["ztl_psuc_or_cited"]) == pytest.approx(0.096)
    code, out, _ = run(capsys, "compare-ztl", "--N", "3", "--d-list", "3")
    (row,) = csv.DictReader(io.StringIO(out))
    assert (int(row["ours_photons"]), int(row["ztl_photons"])) == (9, 25)
    assert float(row["ztl_psuc_or_cited"]) == 1e-10


def test_sweep_t(capsys):
    code, out, _ = run(capsys, "sweep-t", "--N", "3", "--d", "3", "--t-list", "0.6")
    (row,) = csv.DictReader(io.StringIO(out))
    assert float(row["ratio_1"]) == pytest.approx((3**0.5 * 0.6) ** 3, rel=1e-9)


def test_check_identities(capsys):
    code, out, _ = run(capsys, "check-identities", "--d-max", "4", "--format", "json")
    rows = json.loads(out)
    assert code == 0 and rows and all(r["pass"] for r in rows)


def test_compile_multirail_round_trip(capsys, tmp_path):
    path = tmp_path / "c.json"
    code, _, _ = run(capsys, "compile-multirail", "--N", "2", "--d", "3", "--out", str(path))
    assert code == 0
    data = json.loads(path.read_text())
    assert {op["kind"] for op in data["ops"]} <= {"Rewire", "FourierPort", "BS"}
    _, a, _ = run(capsys, "simulate", "--circuit", str(path))
    _, b, _ = run(capsys, "simulate", "--N", "2", "--d", "3")
    ra, rb = json.loads(a), json.loads(b)
    assert ra["p_single"] == pytest.approx(rb["p_single"], rel=1e-9)
    assert ra["p_aggregate"] == pytest.approx(rb["p_aggregate"], rel=1e-9)
    code, out, _ = run(capsys, "compile-multirail", "--N", "2", "--d", "2", "--format", "netlist")
    assert out.startswith("# N=2 d=2")


@pytest.mark.property
def test_probe_min_deterministic(capsys):
    argv = ("probe-min", "--N", "2", "--d", "2", "--M", "3", "--restarts", "3", "--seed", "4")
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    da, db = json.loads(a), json.loads(b)
    da.pop("elapsed_s"), db.pop("elapsed_s")
    assert da == db


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "quditghz", "table", "--d-list", "3", "--N-list", "3"],
        capture_output=True, text=True, check=True,
    ).stdout
    assert out.splitlines()[1] == "3,3,9,0.000361281873247,-3.44215382793"
