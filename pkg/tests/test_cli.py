from __future__ import annotations

import copy
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mintime.cli import main
from mintime.scenario import DEFAULT_TOLERANCES, ConfigError, parse_scenario

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "name": "tiny",
    "system": "grushin",
    "domain": {"lo": [-0.5, -1.0], "hi": [1.5, 1.0]},
    "cells": 41,
    "target": {"kind": "ball", "center": [0.5, 0.0], "radius": 0.05},
    "taus": [0.3],
    "stages": ["solve", "char", "petrov", "extremal"],
    "extremals": [{"kind": "normal", "x0": [0.2, 0.1], "p0": [0.6, 0.8], "duration": 0.5}],
    "assertions": [{"check": "converged"}, {"check": "char_empty"}],
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _report(out: Path) -> dict:
    (run,) = [d for d in out.iterdir() if d.is_dir()]
    return json.loads((run / "report.json").read_text())


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(h=-0.1),
    lambda c: c.update(system="grushn"),
    lambda c: c.update(stages=["solve", "plot"]),
    lambda c: c.update(taus=[0.3, -1]),
    lambda c: c["tolerances"].update(gamma=0.9) if "tolerances" in c else c.update(tolerances={"gamma": 0.9}),
    lambda c: c.update(assertions=[{"check": "looks_good"}]),
    lambda c: c.pop("target"),
])
def test_malformed_config_exit_2(tmp_path, mutate):
    cfg = copy.deepcopy(SMALL)
    mutate(cfg)
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_unreadable_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2


def test_negative_h_example_config(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "bad_negative_h.json"),
                 "--out", str(tmp_path)]) == 2


def test_run_and_report_layout(tmp_path):
    out = tmp_path / "runs"
    assert main(["run", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    rep = _report(out)
    sc = parse_scenario(SMALL)
    run_dir = out / sc.dirname
    assert rep["order"] == ["solve", "char", "petrov", "extremal"]
    assert sorted(rep["stages"]) == sorted(rep["order"])
    for st in rep["stages"].values():
        assert st["status"] == "ok"
        assert all((run_dir / f).exists() for f in st["outputs"])
    assert rep["passed"] and all(a["passed"] for a in rep["assertions"])
    # every tolerance actually used is echoed
    assert set(DEFAULT_TOLERANCES) <= set(rep["scenario"]["tolerances"])
    assert {"h", "eps_char", "band_width", "r_L"} <= set(rep["scenario"]["tolerances"])
    assert "stage_seconds" in rep["timestamps"]


def test_reproducible_reports(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    ra, rb = _report(a), _report(b)
    ra.pop("timestamps")
    rb.pop("timestamps")
    assert ra == rb
    (da,), (db,) = list(a.iterdir()), list(b.iterdir())
    for f in da.iterdir():
        if f.name != "report.json":
            assert f.read_bytes() == (db / f.name).read_bytes()


def test_digest_tracks_content():
    base = parse_scenario(SMALL)
    assert parse_scenario(copy.deepcopy(SMALL)).digest == base.digest
    assert parse_scenario(SMALL, seed=5).digest != base.digest
    other = copy.deepcopy(SMALL)
    other["cells"] = 43
    assert parse_scenario(other).digest != base.digest


def test_failed_assertion_exit_1(tmp_path):
    cfg = copy.deepcopy(SMALL)
    cfg["assertions"] = [{"check": "crosscheck_gap_h", "max": 3}]  # stage never ran
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1


def test_stage_failure_recorded(tmp_path):
    cfg = copy.deepcopy(SMALL)
    cfg["taus"] = [50.0]  # beyond the solver horizon
    out = tmp_path / "o"
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 1
    rep = _report(out)
    assert rep["stages"]["solve"]["status"] == "ok"
    assert rep["stages"]["char"]["status"] == "failed"
    assert "tau" in rep["stages"]["char"]["error"]
    assert rep["stages"]["extremal"]["status"] == "ok"  # independent stages still run


def test_subcommand_limits_stages(tmp_path):
    assert main(["solve", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 0
    rep = _report(tmp_path / "o")
    assert rep["order"] == ["solve"]
    skipped = [a["check"] for a in rep["assertions"] if a.get("skipped")]
    assert skipped == ["char_empty"]


def test_symplectic_scan(tmp_path):
    cfg = copy.deepcopy(SMALL)
    cfg.update(stages=["hormander", "symplectic"], symplectic={"samples": 6, "fix": {"0": 0.0}},
               assertions=[{"check": "hormander_full_rank"}])
    out = tmp_path / "o"
    assert main(["symplectic-scan", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["stages"]["symplectic"]["summary"]["verdicts"] == ["symplectic"]


def test_inline_system():
    cfg = copy.deepcopy(SMALL)
    cfg["system"] = {"name": "inline_grushin", "fields": [
        [[{"coeff": "1", "powers": [0, 0]}], []],
        [[], [{"coeff": "1", "powers": [1, 0]}]]]}
    sc = parse_scenario(cfg)
    assert sc.system.fields[1].components[1] == {(1, 0): 1}
    cfg["system"] = {"fields": "nonsense"}
    with pytest.raises(ConfigError):
        parse_scenario(cfg)


def test_grushin_smoke_config(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mintime.cli", "run", "--config",
                           str(CONFIGS / "grushin_smoke.json"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    rep = _report(tmp_path)
    assert all(s["status"] == "ok" for s in rep["stages"].values())
    char = rep["stages"]["char"]["summary"]["records"]
    assert set(char.values()) == {0}


def test_acs3_config(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "acs3.json"), "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path)
    slab = next(a for a in rep["assertions"] if a["check"] == "char_in_slab")
    assert slab["passed"]
