import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ahvortex.cli import EXIT_CONFIG, main
from ahvortex.evolution import RunRecord
from ahvortex.profile import TailCharges, interaction_energy_point

RADIAL = "radial: {m: 2001, rho_max: 25}\n"


def _cfg(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_malformed_config_exits_without_files(tmp_path, capsys):
    cfg = _cfg(tmp_path, "model: {lambda: [1,\n")
    out = tmp_path / "out"
    assert main(["profile", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert "configuration error" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    "bogus: 1\n",
    "model: {lambda: -1}\n",
    "grid: {n1: 101, n2: 101, h: 0.1}\nevolution: {dt: 0.2}\n",
    "vortices: [{position: [0, 0], v: 1.5}]\n",
    "output: {formats: [png]}\n",
])
def test_invalid_configs_rejected(tmp_path, text):
    out = tmp_path / "out"
    assert main(["evolve", "--config", str(_cfg(tmp_path, text)), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["profile", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_dry_run_plans_without_computing(tmp_path, capsys):
    cfg = _cfg(tmp_path, "scan: {v_list: [0.05, 0.06], sigma_list: [0, pi/2, pi]}\n")
    out = tmp_path / "out"
    assert main(["scan", "--config", str(cfg), "--out", str(out), "--dry-run"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["points"] == 6 and plan["command"] == "scan"
    assert plan["config"]["scan"]["sigma_list"][2] == pytest.approx(np.pi)
    assert not out.exists()


def test_profile_command_critical(tmp_path):
    out = tmp_path / "p"
    assert main(["profile", "--config", str(_cfg(tmp_path, RADIAL)), "--out", str(out)]) == 0
    info = json.loads((out / "tails.json").read_text())
    assert abs(info["q"] - info["m"]) / info["q"] < 0.02
    assert abs(info["energy"] / np.pi - 1) < 0.005
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["model"]["lambda"] == 1.0
    assert (out / "profile.csv").read_text().startswith("rho,")
    assert not [p for p in out.iterdir() if p.name.startswith(".")]


def test_profile_command_type_two(tmp_path):
    out = tmp_path / "p"
    assert main(["profile", "--config", str(_cfg(tmp_path, "model: {lambda: 2}\n" + RADIAL)), "--out", str(out)]) == 0
    info = json.loads((out / "tails.json").read_text())
    c = TailCharges(info["q"], info["m"])
    # the magnetic tail is the longer-ranged one: net repulsion at large R
    assert all(interaction_energy_point(R, c, 2.0) > 0 for R in (10.0, 15.0, 20.0))


def test_modes_command_default(tmp_path):
    out = tmp_path / "m"
    assert main(["modes", "--config", str(_cfg(tmp_path, RADIAL)), "--out", str(out)]) == 0
    info = json.loads((out / "mode.json").read_text())
    assert info["bound_mode"] and 0.776 <= info["omega2"] <= 0.779
    assert (out / "mode.csv").exists()


def test_modes_command_lambda_one_and_half(tmp_path):
    out = tmp_path / "m"
    assert main(["modes", "--config", str(_cfg(tmp_path, "model: {lambda: 1.5}\n" + RADIAL)), "--out", str(out)]) == 0
    info = json.loads((out / "mode.json").read_text())
    if info["bound_mode"]:
        assert 0 < info["omega2"] < 1.0
    else:
        assert info["omega2"] is None and "no eigenvalue" in info["message"]


def test_modes_command_requires_unit_degree(tmp_path):
    assert main(["modes", "--config", str(_cfg(tmp_path, "model: {N: 2}\n" + RADIAL)), "--out", str(tmp_path / "m")]) == EXIT_CONFIG


EVOLVE = """grid: {n1: 121, n2: 81, h: 0.2}
radial: {m: 2001, rho_max: 25}
vortices:
  - {position: [-5, 0], v: 0.3}
  - {position: [5, 0], v: -0.3}
evolution: {dt: 0.02, t_end: 4, cadences: {diagnostic: 10, snapshot: 100}}
output: {formats: [csv, json, vxl1, pgm]}
"""


def test_evolve_then_analyze(tmp_path):
    out = tmp_path / "e"
    cfg = _cfg(tmp_path, EVOLVE)
    assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"diagnostics.csv", "final.vxl1", "final_energy_density.csv", "final_energy_density.pgm",
            "summary.json", "metadata.json", "snapshots"} <= names
    assert len(list((out / "snapshots").iterdir())) == 3  # steps 0, 100, 200
    rec = RunRecord.from_csv(out / "diagnostics.csv")
    assert rec.times[-1] == pytest.approx(4.0)
    flux = np.array(rec.flux) / (-2 * np.pi)
    assert np.abs(flux - 2).max() < 0.05
    summary = json.loads((out / "summary.json").read_text())
    assert "bounces" in summary and "envelope" in summary
    assert main(["analyze", "--config", str(cfg), "--out", str(out), str(out / "diagnostics.csv")]) == 0
    res = json.loads((out / "analysis.json").read_text())
    assert list(res.values())[0]["t_end"] == pytest.approx(4.0)


def test_analyze_missing_record(tmp_path):
    assert main(["analyze", "--out", str(tmp_path / "a"), str(tmp_path / "none.csv")]) == 1
    assert not (tmp_path / "a" / "analysis.json").exists()


def test_console_entry_point(tmp_path):
    env = dict(os.environ)
    r = subprocess.run([sys.executable, "-m", "ahvortex.cli", "--version"], capture_output=True, text=True, env=env)
    assert r.returncode == 0 and r.stdout.startswith("ahvortex ")
