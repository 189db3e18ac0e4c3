import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml
from conftest import CONFIGS, sample_drop

from dfrc.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_INFEASIBLE, main
from dfrc.config import ConfigError, Direction
from dfrc.experiments import (Table, child_seeds, comm_only_rate, format_cell, parse_sweep,
                              radar_only_rate, render, run_experiment, scan_cell)
from dfrc.optimizer import Problem


def write_cfg(tmp_path: Path, data: dict, name="cfg.yaml") -> Path:
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


SMALL_SUMRATE = {"cell_radius": 400, "sigma_delta": 2.0, "noise_power": 1e-17,
                 "experiment": {"snr_db": [10], "drops": 3, "K": 2, "candidates": 5}}


# ---------------------------------------------------------------- sweeps ---

def test_sweep_parsing():
    assert parse_sweep("snr_db=0:20:5") == ("snr_db", [0.0, 5.0, 10.0, 15.0, 20.0])
    assert parse_sweep("U=6:14:4") == ("U", [6, 10, 14])
    assert parse_sweep("range=100:250:100") == ("range", [100.0, 200.0])
    assert parse_sweep("x=0.1:0.3:0.1")[1] == [0.1, 0.2, 0.3]
    for bad in ("snr_db", "snr_db=0:1", "=0:1:1", "a=0:1:0", "a=2:1:1", "a=x:1:1"):
        with pytest.raises(ConfigError):
            parse_sweep(bad)


def test_cell_formatting():
    assert format_cell(None) == "" and format_cell(True) == "1"
    assert format_cell(np.int64(3)) == "3"
    assert format_cell(1 / 3) == "0.3333333333"
    assert format_cell("infeasible") == "infeasible"
    text = render(Table(["a [1]"], [[1.0]], ["hello"]), {"tool": "x"})
    assert text == "# tool: x\n# note: hello\na [1]\n1\n"


def test_child_seeds_are_stable():
    a = [s.generate_state(1)[0] for s in child_seeds(7, 3)]
    assert a == [s.generate_state(1)[0] for s in child_seeds(7, 3)]
    assert len(set(a)) == 3


# ------------------------------------------------------------ exit codes ---

def test_missing_and_malformed_configs(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["spectrum", "--config", str(tmp_path / "nope.yaml"), "--out", str(out)]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    assert main(["spectrum", "--config", str(bad), "--out", str(out)]) == EXIT_CONFIG
    unknown = write_cfg(tmp_path, {"warp_factor": 9})
    assert main(["spectrum", "--config", str(unknown), "--out", str(out)]) == EXIT_CONFIG
    assert "warp_factor" in capsys.readouterr().err
    sweep = write_cfg(tmp_path, {})
    assert main(["spectrum", "--config", str(sweep), "--out", str(out),
                 "--sweep", "mu=1:0:1"]) == EXIT_CONFIG
    assert not out.exists()


def test_unknown_kind_exits_with_usage(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["teleport", "--config", "x", "--out", "y"])
    assert exc.value.code == 2


def test_infeasible_floors_exit_code(tmp_path):
    data = dict(SMALL_SUMRATE, rho_user=40.0)
    cfg = write_cfg(tmp_path, data)
    assert main(["sumrate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == \
        EXIT_INFEASIBLE


def test_guard_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, {"experiment": {"U": [12], "K": 4, "drops": 1, "guard": 100}})
    assert main(["selection", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == \
        EXIT_GUARD


# ------------------------------------------------------------ determinism ---

def _run(kind, cfg, out, *extra, env=None):
    cmd = [sys.executable, "-m", "dfrc.cli", kind, "--config", str(cfg), "--out", str(out),
           *extra]
    subprocess.run(cmd, check=True, env=env)
    return out.read_bytes()


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_SUMRATE)
    a = _run("sumrate", cfg, tmp_path / "a.csv", "--seed", "5")
    b = _run("sumrate", cfg, tmp_path / "b.csv", "--seed", "5")
    env = dict(os.environ, DFRC_THREADS="2")
    c = _run("sumrate", cfg, tmp_path / "c.csv", "--seed", "5", env=env)
    assert a == b == c
    d = _run("sumrate", cfg, tmp_path / "d.csv", "--seed", "6")
    assert a != d


def test_manifest_and_sweep(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 3, "experiment": {"pulse": ["rect"], "blocks": 4}})
    out = tmp_path / "s.csv"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out),
                 "--sweep", "mu=5e9:1e10:5e9"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# tool: dfrc 0.1.0"
    assert lines[1] == "# kind: spectrum"
    assert lines[3] == "# seed: 3"
    assert '"mu": [5000000000.0, 10000000000.0]' in lines[4]
    header = lines[5].split(",")
    assert header[0] == "pulse" and all("[" in h for h in header[1:])
    assert len(lines) == 8


def test_seed_precedence(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 3, "experiment": {"seed": 4, "pulse": ["rect"],
                                                         "mu": [1e10], "blocks": 2}})
    out = tmp_path / "s.csv"
    main(["spectrum", "--config", str(cfg), "--out", str(out)])
    assert "# seed: 4" in out.read_text()
    main(["spectrum", "--config", str(cfg), "--out", str(out), "--seed", "9"])
    assert "# seed: 9" in out.read_text()


# ---------------------------------------------------------------- runners ---

def test_zero_power_rates_vanish():
    drop = sample_drop(0)
    p = drop.problem
    dead = Problem(p.H, p.Z, p.A_K, p.ue_noise, p.noise, 0.0, p.e_rad)
    assert radar_only_rate(dead, drop.w_t) == 0.0
    assert comm_only_rate(dead, drop.w_t) == 0.0


def test_scan_cell_contains_direction():
    d = (math.radians(10), math.radians(10))
    cell = scan_cell(Direction(math.radians(47), math.radians(359.9)), d)
    assert math.degrees(cell.theta) == pytest.approx(45.0)
    assert math.degrees(cell.phi) == pytest.approx(355.0)
    edge = scan_cell(Direction(math.pi / 2, 0.0), d)
    assert math.degrees(edge.theta) == pytest.approx(85.0)


def test_unknown_runner(cfg):
    with pytest.raises(ConfigError):
        run_experiment("nothing", cfg, {}, 0)


def test_detect_scan(cfg):
    from dfrc.config import load_config
    c, exp = load_config(CONFIGS / "detect.yaml")
    table = run_experiment("detect", c, exp, 0)
    hits = [r for r in table.rows if r[5]]
    assert len(hits) >= 1
    best = [r for r in table.rows if r[6] is not None]
    assert len(best) == 1
    assert best[0][1] == pytest.approx(45.0) and best[0][2] == pytest.approx(45.0)
    assert abs(best[0][6] - 1500.0) <= 150.0 and abs(best[0][7] - 62.5) <= 625.0
    empty = run_experiment("detect", c, dict(exp, target=None), 0)
    assert not any(r[5] for r in empty.rows)


def test_detect_off_grid_lands_next_door():
    from dfrc.config import load_config
    c, exp = load_config(CONFIGS / "detect.yaml")
    # 50 deg elevation sits on the boundary between the 45 and 55 deg cells
    table = run_experiment("detect", c, dict(exp, target={"theta_deg": 50, "phi_deg": 45}), 0)
    best = [r for r in table.rows if r[6] is not None][0]
    assert best[1] in (pytest.approx(45.0), pytest.approx(55.0))
    assert best[2] == pytest.approx(45.0)


def test_tradeoff_marks_infeasible_cells(tmp_path):
    cfg, exp = _tradeoff_small(ranges=[100, 5000])
    table = run_experiment("tradeoff", cfg, exp, 0)
    assert isinstance(table.rows[0][1], float)
    assert table.rows[1][1] == "infeasible"


def _tradeoff_small(ranges):
    from dfrc.config import load_config
    cfg, exp = load_config(CONFIGS / "tradeoff.yaml")
    return cfg, dict(exp, range=ranges, K=[4], rcs=[0.5], drops=3)


def test_tradeoff_rejects_bad_range():
    cfg, exp = _tradeoff_small(ranges=[0])
    with pytest.raises(ConfigError):
        run_experiment("tradeoff", cfg, exp, 0)


def test_shipped_configs_load():
    from dfrc.config import load_config
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg, exp = load_config(path)
        assert isinstance(exp, dict) and cfg.digest()
