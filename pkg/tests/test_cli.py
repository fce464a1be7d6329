import json
import os

import pytest

from xfields.cli import main
from xfields.config import config_from_dict, load_config, parse_text
from xfields.errors import EmptyRecord, ParseError, ValidationError
from xfields.experiments import ResultRecord, rows_to_csv, run_experiment, write_record
from xfields.plots import emit_plots

CERT = """
experiment = "certificate"
[grid]
x_min = -20.0
x_max = 20.0
y_min = -8.0
y_max = 8.0
n_x = 32
n_y = 64
[potential]
kind = "strip"
A0 = {A0}
eta0 = 0.1
[weights]
gamma = 0.4
[scan]
R = 5.0
C_R_gamma = 1.888
B_R_gamma = 2.081
"""

SCAN = """
[grid]
x_min = -8.0
x_max = 8.0
y_min = -8.0
y_max = 8.0
n_x = 32
n_y = 32
absorber_width = 3.0
absorber_strength = 3.0
[scan]
lam = [5.0, 10.0, 20.0]
nu = [0.5]
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ---------------------------------------------------------------- config

def test_minimal_certificate_defaults(tmp_path):
    p = _write(tmp_path, "c.toml", 'experiment = "certificate"\n[potential]\neta0 = 0.1\n'
               "A0 = 1.0\n[weights]\ngamma = 0.4\n[scan]\nR = 5.0\n")
    cfg = load_config(p)
    assert cfg.seed == 42
    assert (cfg.grid["n_x"], cfg.grid["n_y"]) == (256, 256)
    assert cfg.grid["x_min"] == -30 and cfg.grid["x_max"] == 30


def test_gamma_out_of_range_message():
    with pytest.raises(ValidationError, match=r"gamma must be in \(0, 0.5\)"):
        config_from_dict({"experiment": "certificate", "weights": {"gamma": 0.7}})


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="foo"):
        config_from_dict({"experiment": "certificate", "foo": 1})
    with pytest.raises(ValidationError, match="foo"):
        config_from_dict({"experiment": "certificate", "grid": {"foo": 1}})


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_text("[grid]\nn_x = = 3\n")
    assert info.value.line == 2 and info.value.column > 0


def test_experiment_mismatch(tmp_path):
    p = _write(tmp_path, "c.toml", CERT.format(A0=1.0))
    with pytest.raises(ValidationError):
        load_config(p, "detector")


def test_config_hash_ignores_output_location():
    a = config_from_dict({"experiment": "diagnostics", "output_dir": "a"})
    b = config_from_dict({"experiment": "diagnostics", "output_dir": "b"})
    c = config_from_dict({"experiment": "diagnostics", "seed": 7})
    assert a.hash() == b.hash() != c.hash()


# ---------------------------------------------------------------- CLI and exit codes

def test_certificate_pass_exit_zero(tmp_path, capsys):
    p = _write(tmp_path, "c.toml", CERT.format(A0=1.0))
    out = tmp_path / "pass"
    assert main(["certificate", "--config", p, "--out", str(out)]) == 0
    rec = json.loads((out / "record.json").read_text())
    assert rec["verdicts"]["certificate"] == "PASS"
    assert rec["constants"]["c"] == pytest.approx(0.1 ** 0.8 * 1.888, rel=1e-12)
    assert "PASS" in capsys.readouterr().out


def test_certificate_fail_exit_two(tmp_path):
    p = _write(tmp_path, "c.toml", CERT.format(A0=30.0))
    out = tmp_path / "fail"
    assert main(["certificate", "--config", p, "--out", str(out)]) == 2
    assert json.loads((out / "record.json").read_text())["verdicts"]["certificate"] == "FAIL"


def test_errors_exit_one(tmp_path, capsys):
    p = _write(tmp_path, "bad.toml", "[weights]\ngamma = 0.7\n")
    assert main(["certificate", "--config", p, "--out", str(tmp_path / "x")]) == 1
    assert "gamma must be in (0, 0.5)" in capsys.readouterr().err
    assert main(["certificate", "--config", str(tmp_path / "missing.toml")]) == 1


def test_record_contents(tmp_path):
    cfg = load_config(_write(tmp_path, "s.toml", SCAN), "resolvent-scan")
    rec = run_experiment(cfg)
    assert rec.config_hash == cfg.hash()
    assert all("residual" in r and "tolerance" in r for r in rec.rows)
    assert all(r["residual"] <= r["tolerance"] for r in rec.rows)
    assert set(rec.versions) >= {"xfields", "numpy", "scipy", "python"}


def test_csv_byte_identical(tmp_path):
    p = _write(tmp_path, "s.toml", SCAN)
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["resolvent-scan", "--config", p, "--out", str(out)]) == 0
        blobs.append(((out / "points.csv").read_bytes(),
                      (out / "plots" / "decay.svg").read_bytes()))
    assert blobs[0][0] == blobs[1][0]
    assert blobs[0][1] == blobs[1][1]


def test_seed_override_changes_hash(tmp_path):
    p = _write(tmp_path, "s.toml", SCAN)
    main(["resolvent-scan", "--config", p, "--out", str(tmp_path / "s1"), "--seed", "1",
          "--no-plots"])
    rec = json.loads((tmp_path / "s1" / "record.json").read_text())
    assert rec["config"]["seed"] == 1
    assert not os.path.exists(tmp_path / "s1" / "plots")


# ---------------------------------------------------------------- plots

def test_unboundedness_plot(tmp_path):
    cfg = config_from_dict({"experiment": "unboundedness-demo", "scan": {"n_list": [0, 5, 10]}})
    rec = run_experiment(cfg)
    paths = write_record(rec, str(tmp_path))
    svg = os.path.join(str(tmp_path), "plots", "unboundedness.svg")
    assert svg in paths["plots"]
    assert all(r["value"] >= r["bound"] for r in rec.rows)
    assert open(svg).read().lstrip().startswith("<?xml")


def test_empty_record():
    rec = ResultRecord("resolvent-scan", "0", {}, [])
    with pytest.raises(EmptyRecord):
        emit_plots(rec, "unused")
    with pytest.raises(EmptyRecord):
        write_record(rec, "unused")


def test_csv_formatting():
    text = rows_to_csv([{"b": 0.1, "a": 1, "c": None}, {"a": True, "d": 1 + 2j}])
    lines = text.splitlines()
    assert lines[0] == "a,b,c,d"
    assert lines[1] == "1,0.10000000000000001,,"
    assert lines[2] == "true,,,1+2j"
