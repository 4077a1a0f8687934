import json
import subprocess
import sys

import pytest

from kinlv import cli
from kinlv.outputs import read_csv, verify_manifest


def run(tmp_path, *args):
    return cli.run([*args, "--out", str(tmp_path)])


def test_means_golden_header(tmp_path):
    assert run(tmp_path, "means", "--t-end", "2") == 0
    header, body = read_csv(tmp_path / "means.csv")
    assert header == ["t", "m_f", "m_g"]
    assert body[0].tolist() == [0.0, 4.0, 3.0]
    assert body[-1, 0] == 2.0
    assert verify_manifest(tmp_path / "manifest.json") == []


@pytest.mark.parametrize("risk", ["half-half", "half-one"])
def test_cv_golden_header(tmp_path, risk):
    assert run(tmp_path, "cv", "--t-end", "1", "--risk", risk) == 0
    header, body = read_csv(tmp_path / "cv.csv")
    assert header == ["t", "m_f", "m_g", "v_f", "v_g", "c_f", "c_g"]
    assert body[0, 5:].tolist() == [2.0, 1.0]
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["config"]["params"]["risk_g"] == ("half" if risk == "half-half" else "one")


def test_mc_outputs(tmp_path):
    assert run(tmp_path, "mc", "--agents", "500", "--eps", "0.05", "--t-end", "0.5", "--seed", "3") == 0
    header, body = read_csv(tmp_path / "mc.csv")
    assert header == ["t", "m_f", "m_g", "v_f", "v_g", "c_f", "c_g", "gini_f", "gini_g", "skipped_events"]
    hist_header, _ = read_csv(tmp_path / "hist_t0.5.csv")
    assert hist_header == ["bin_left", "bin_right", "density_f", "density_g"]
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["seed"] == 3
    assert verify_manifest(tmp_path / "manifest.json") == []


def test_mc_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.run(["mc", "--agents", "300", "--eps", "0.05", "--t-end", "0.25", "--out", str(d)]) == 0
    assert (a / "mc.csv").read_bytes() == (b / "mc.csv").read_bytes()


def test_fp_outputs(tmp_path):
    assert run(tmp_path, "fp", "--cells", "64", "--xmax", "20", "--t-end", "0.2") == 0
    header, body = read_csv(tmp_path / "fp.csv")
    assert header == ["t", "m_f", "m_g", "v_f", "v_g", "c_f", "c_g", "mass_f", "mass_g"]
    snap_header, snap = read_csv(tmp_path / "snapshot_t0.2.csv")
    assert snap_header == ["x", "f", "g"] and snap.shape == (64, 3)
    meta = json.loads((tmp_path / "fp_meta.json").read_text())
    assert meta["mesh"] == {"n_cells": 64, "x_max": 20.0}


def test_figures_outputs(tmp_path):
    assert run(tmp_path, "figures", "--which", "1", "--which", "4", "--t-end", "30") == 0
    header, _ = read_csv(tmp_path / "fig4.csv")
    assert header == ["t", "m_f", "m_g", "c_f", "c_g", "c_f_eq", "c_g_eq"]
    svg = (tmp_path / "fig1.svg").read_text()
    assert "<metadata>kinlv" in svg
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["extra"]["fig1"]["synchrony"] is True
    assert doc["extra"]["fig4"]["tracking"] is True
    assert verify_manifest(tmp_path / "manifest.json") == []


def test_sweep_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("KINLV_THREADS", "2")
    assert run(tmp_path, "sweep", "--agents", "500", "--t-end", "0.5") == 0
    header, body = read_csv(tmp_path / "sweep.csv")
    assert header == ["epsilon", "l1_mean_error", "max_se_multiple", "skipped_events"]
    assert body[:, 0].tolist() == [0.1, 0.05, 0.01]


def test_max_workers(monkeypatch):
    monkeypatch.setenv("KINLV_THREADS", "3")
    assert cli.max_workers() == 3
    monkeypatch.setenv("KINLV_THREADS", "zero")
    assert cli.max_workers(5) == 5


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"params": {"alpha": -1}}))
    assert run(tmp_path, "means", "--config", str(bad)) == 2
    bad.write_text(json.dumps({"run": {"bogus": 1}}))
    assert run(tmp_path, "means", "--config", str(bad)) == 2
    assert run(tmp_path, "means", "--eps", "-1") == 2
    assert run(tmp_path, "means", "--config", str(tmp_path / "missing.json")) == 4
    assert cli.run(["launch"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.run(["means", "--t-end", "1", "--out", str(blocker / "sub")]) == 4


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from kinlv.integrate import StepUnderflow

    def boom(*a, **k):
        raise StepUnderflow("step size underflow")

    monkeypatch.setattr(cli, "integrate_means", boom)
    assert run(tmp_path, "means") == 3


def test_console_script(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "kinlv.cli", "means", "--t-end", "0.5", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "means.csv").exists()
