import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from epiprox.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_restore_writes_three_files(tmp_path):
    out = tmp_path / "out"
    assert main(["--threads", "1", "restore", "--config", str(CONFIGS / "restore_tiny.json"),
                 "--out-dir", str(out)]) == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"restored.pgm", "metrics.json", "trace.csv"}
    m = json.loads((out / "metrics.json").read_text())
    assert {"snr_db", "ssim", "iters", "wall_time_s"} <= set(m)
    assert _rows(out / "trace.csv")[0][:4] == ["iter", "time_s", "rel_change", "objective"]


def test_restore_methods_agree(tmp_path):
    objs = {}
    for method in ("epigraphical", "direct"):
        out = tmp_path / method
        assert main(["--threads", "1", "restore", "--config", str(CONFIGS / "restore_tiny.json"),
                     "--out-dir", str(out), "--method", method]) == EXIT_OK
        objs[method] = json.loads((out / "metrics.json").read_text())["objective"]
    assert abs(objs["epigraphical"] - objs["direct"]) <= 1e-3 * objs["direct"]


def test_restore_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out"
    assert main(["restore", "--config", str(bad), "--out-dir", str(out)]) == EXIT_INPUT
    assert not out.exists()
    assert main(["restore", "--config", str(tmp_path / "missing.json"), "--out-dir", str(out)]) == EXIT_INPUT
    assert "not found" in capsys.readouterr().err
    img = tmp_path / "img.json"
    img.write_text(json.dumps({"image": "nope.pgm"}))
    assert main(["restore", "--config", str(img), "--out-dir", str(out)]) == EXIT_INPUT
    assert not out.exists()


def test_pulse_default(tmp_path):
    out = tmp_path / "p"
    assert main(["--threads", "1", "pulse", "--out-dir", str(out)]) == EXIT_OK
    rows = _rows(out / "pulse.csv")
    assert rows[0] == ["index", "time_ms", "value"] and len(rows) == 513
    assert _rows(out / "spectrum.csv")[0] == ["bin", "hz", "magnitude"]
    rep = json.loads((out / "report.json").read_text())
    assert {"objective", "residuals", "epsilon", "beta", "iters"} <= set(rep)


def test_pulse_flags(tmp_path):
    out = tmp_path / "p"
    assert main(["pulse", "--out-dir", str(out), "--epsilon", "1e9"]) == EXIT_OK
    assert json.loads((out / "report.json").read_text())["c1_active"] is False
    out2 = tmp_path / "q"
    assert main(["pulse", "--out-dir", str(out2), "--beta", "0.5"]) == EXIT_INPUT
    assert not out2.exists()


def test_pulse_infeasible_exit_code(tmp_path, capsys):
    # the energy bound of 1.1x the minimum norm cannot also meet this mask budget
    out = tmp_path / "p"
    assert main(["pulse", "--out-dir", str(out), "--epsilon", "1.6"]) == EXIT_INFEASIBLE
    assert "residuals" in capsys.readouterr().out
    cfg = tmp_path / "mu.json"
    cfg.write_text(json.dumps({"pulse": {"energy_mu": 0.5}}))
    assert main(["pulse", "--config", str(cfg), "--out-dir", str(tmp_path / "r")]) == EXIT_INFEASIBLE


def test_bench_one_row(capsys):
    assert main(["bench-proj", "--p", "2", "--sizes", "1000", "--trials", "1"]) == EXIT_OK
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["size", "epi_us", "direct_us", "ratio"] and len(rows) == 2
    assert rows[1][0] == "1000"
    assert main(["bench-proj", "--sizes", "abc"]) == EXIT_INPUT


def test_selftest_passes_and_detects_perturbed_tolerance(monkeypatch, capsys):
    assert main(["selftest", "--suites", "prox,ballproj"]) == EXIT_OK
    monkeypatch.setenv("EPIPROX_SELFTEST_TOL_SCALE", "1e-30")
    assert main(["selftest", "--suites", "prox"]) != EXIT_OK


def test_threads_validation():
    assert main(["--threads", "0", "selftest", "--suites", "prox"]) == EXIT_INPUT


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "epiprox.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "restore" in r.stdout
    with pytest.raises(SystemExit):
        main(["frobnicate"])
