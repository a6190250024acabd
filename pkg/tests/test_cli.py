import csv
import io
import json

import pytest

from asepdist.cli import main, parse_range, read_config, UsageError
from asepdist.model import ModelParams
from asepdist.oracles import skellam_single


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def csv_header(text):
    return dict(line[2:].split("=", 1) for line in text.splitlines() if line.startswith("# "))


def test_parse_range_forms():
    assert parse_range("-2..1") == [-2, -1, 0, 1]
    assert parse_range("3,1,4") == [3, 1, 4]
    assert parse_range("5") == [5]
    with pytest.raises(UsageError):
        parse_range("3..1")
    with pytest.raises(UsageError):
        parse_range("a..b")


def test_eval_single_particle_csv(capsys):
    code, out, _ = run(capsys, "eval", "--ic", "finite", "--y", "1", "--m", "1", "--t", "1", "--x", "-2..3")
    assert code == 0
    head = csv_header(out)
    assert head["schema"] == "asepdist.eval/1"
    assert float(head["p"]) == 0.3 and "build" in head and head["contours"] == "auto"
    rows = csv_rows(out)
    assert [int(r["x"]) for r in rows] == list(range(-2, 4))
    for r in rows:
        assert float(r["probability"]) == pytest.approx(skellam_single(1, int(r["x"]), 1.0, ModelParams(0.3)), abs=1e-8)
        assert r["converged"] == "1"


def test_eval_json_schema(capsys):
    code, out, _ = run(capsys, "eval", "--ic", "finite", "--y", "0,2", "--m", "2", "--t", "0.4", "--x", "1..2", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "asepdist.eval/1"
    assert set(doc["header"]) >= {"p", "q", "tau", "seed", "build"}
    assert [row["x"] for row in doc["rows"]] == [1, 2]
    assert 0.0 < doc["rows"][0]["probability"] < doc["rows"][1]["probability"] < 1.0


def test_explicit_radii_reach_the_header(capsys):
    code, out, _ = run(capsys, "eval", "--ic", "step", "--t", "0.5", "--x", "0", "--R", "4.0", "--format", "json")
    assert code == 0
    assert json.loads(out)["header"]["R"] == 4.0


def test_usage_errors_exit_one(capsys):
    code, _, err = run(capsys, "eval", "--ic", "alternating", "--m", "2", "--t", "0.5")
    assert code == 1 and "odd" in err
    assert run(capsys, "eval", "--bogus")[0] == 1
    assert run(capsys, "eval", "--ic", "finite")[0] == 1
    assert run(capsys, "eval", "--ic", "finite", "--y", "0", "--p", "1.5")[0] == 1
    assert run(capsys, "eval", "--ic", "finite", "--y", "0", "--r", "5.0")[0] == 1
    assert run(capsys, "simulate", "--ic", "step", "--method", "master")[0] == 1
    assert run(capsys, "eval", "--ic", "finite", "--y", "0", "--threads", "0")[0] == 1


def test_unconverged_series_exit_two(capsys):
    code, out, _ = run(capsys, "eval", "--ic", "step", "--m", "1", "--t", "0.5", "--x", "-1..0", "--kmax", "1")
    assert code == 2
    assert all(r["converged"] == "0" for r in csv_rows(out))


def test_verify_identity_suites(capsys):
    code, out, _ = run(capsys, "verify", "lemma32", "--kmax", "5", "--trials", "100", "--p", "0.3")
    assert code == 0
    doc = json.loads(out)
    assert [r["k"] for r in doc["rows"]] == [1, 2, 3, 4, 5]
    assert max(r["max_residual"] for r in doc["rows"]) <= 1e-9
    code, out, _ = run(capsys, "verify", "lemma31", "--kmax", "1")
    assert code == 0
    assert json.loads(out)["rows"][0]["max_residual"] < 1e-14


def test_config_file_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults for a small run\nic = finite\ny = 1\nm = 1\nt = 0.5\nx = 0..1\np = 0.4  # override\n")
    code, out, _ = run(capsys, "--config", str(cfg), "eval")
    assert code == 0
    assert float(csv_header(out)["p"]) == 0.4
    assert [r["x"] for r in csv_rows(out)] == ["0", "1"]
    code, out, _ = run(capsys, "--config", str(cfg), "eval", "--p", "0.2", "--x", "-1")
    assert float(csv_header(out)["p"]) == 0.2
    assert [r["x"] for r in csv_rows(out)] == ["-1"]


def test_config_errors(capsys, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(capsys, "--config", str(bad), "eval")[0] == 1
    bad.write_text("just words\n")
    assert run(capsys, "--config", str(bad), "eval")[0] == 1
    assert run(capsys, "--config", str(tmp_path / "missing.cfg"), "eval")[0] == 1


def test_read_config_normalises_keys(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("max-nodes = 3\n\n  tol=1e-8 # tight\n")
    assert read_config(cfg) == {"max_nodes": "3", "tol": "1e-8"}


@pytest.mark.parametrize(
    "argv",
    [
        ("eval", "--ic", "finite", "--y", "1,3", "--m", "2", "--t", "0.7", "--x", "1..3"),
        ("simulate", "--ic", "finite", "--y", "0,2", "--t", "0.5", "--trials", "120000", "--x", "-2..2", "--seed", "7"),
    ],
)
def test_output_identical_across_threads(capsys, argv):
    outs = [run(capsys, *argv, "--threads", str(n))[1] for n in (1, 2, 4)]
    assert outs[0] == outs[1] == outs[2]


def test_threads_from_environment(capsys, monkeypatch):
    argv = ("eval", "--ic", "finite", "--y", "0", "--t", "0.3", "--x", "0")
    monkeypatch.setenv("ASEPDIST_THREADS", "3")
    a = run(capsys, *argv)[1]
    monkeypatch.setenv("ASEPDIST_THREADS", "junk")
    b = run(capsys, *argv)[1]
    assert a == b


def test_simulate_master_and_output_file(capsys, tmp_path):
    dest = tmp_path / "cdf.csv"
    code, out, _ = run(capsys, "simulate", "--method", "master", "--ic", "finite", "--y", "0,2", "--t", "0.5",
                       "--x", "-1..1", "-o", str(dest))
    assert code == 0 and out == ""
    rows = csv_rows(dest.read_text())
    assert [float(r["ci_halfwidth"]) for r in rows] == [0.0, 0.0, 0.0]
    assert "boundary_mass" in csv_header(dest.read_text())


def test_compare_oracles(capsys):
    code, out, _ = run(capsys, "compare", "--oracle", "skellam", "--ic", "finite", "--y", "0", "--t", "1", "--x", "-3..3")
    assert code == 0 and json.loads(out)["summary"]["max_abs_diff"] <= 1e-8
    code, out, _ = run(capsys, "compare", "--oracle", "current", "--ic", "step", "--m", "1", "--t", "0.5", "--x", "-2..1")
    assert code == 0 and json.loads(out)["summary"]["max_abs_diff"] == 0.0
    code, out, _ = run(capsys, "compare", "--oracle", "master", "--ic", "finite", "--y", "0,2", "--m", "1", "--t", "0.5",
                       "--x", "-2..1")
    assert code == 0
    code, _, _ = run(capsys, "compare", "--oracle", "skellam", "--ic", "finite", "--y", "0,2")
    assert code == 1


def test_compare_monte_carlo(capsys):
    code, out, _ = run(capsys, "compare", "--oracle", "mc", "--ic", "finite", "--y", "0,2", "--m", "1", "--t", "0.5",
                       "--x", "-2..1", "--trials", "50000", "--seed", "3")
    doc = json.loads(out)
    assert code == 0 and doc["summary"]["max_abs_z"] <= 4.0
