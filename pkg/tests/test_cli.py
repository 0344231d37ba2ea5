import csv
import json
import subprocess
import sys

import pytest

from leafout.cli import EXIT_CONFIG, EXIT_NUMERIC, main
from leafout.config import build, config_hash, parse_config
from leafout.design import parse_cut_svg
from leafout.errors import ConfigError, SolverError
from leafout.flight import DropScenario
from leafout.structure import OrigamiSpec, energy_landscape


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return p


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# tool=leafout")
    return list(csv.reader(lines[1:]))


def read_json(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith('{"meta": ')
    return json.loads(path.read_text())


def test_energy_matches_library(tmp_path):
    assert main(["energy", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "energy.csv")
    assert rows[0] == ["psi_deg", "energy_J", "energy_normalized"]
    top = max(rows[1:], key=lambda r: float(r[2]))
    land = energy_landscape(OrigamiSpec())
    assert float(top[1]) == pytest.approx(land.barrier_energy, rel=1e-9)
    s = read_json(tmp_path / "energy_summary.json")
    assert s["barrier_energy_J"] == land.barrier_energy
    assert s["meta"]["seed"] == 0


def test_energy_sweep_table(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 1, "energy": {"num": 41, "n_cells_sweep": [3, 4]}})
    assert main(["energy", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "barrier_table.csv")
    assert [r[0] for r in rows[1:]] == ["3", "4"]


def test_pattern_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 3, "pattern": {"thickness_um": [12.5], "cut_pct": [26], "roots": [False]}})
    assert main(["pattern", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "force_table.csv")
    assert rows[0] == ["thickness_um", "cut_pct", "root", "force_mN"]
    assert float(rows[1][3]) == pytest.approx(6.5, rel=0.01)
    svg = (tmp_path / "pattern.svg").read_text()
    assert svg.startswith("<!-- tool=leafout")
    assert len(parse_cut_svg(svg).holes) > 0


def test_actuate_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 0, "actuate": {"bench": True, "stride": 100}})
    assert main(["actuate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "discharge.csv")
    assert rows[0] == ["t_us", "v_cap_V", "i_A", "x_mm", "f_mN"]
    s = read_json(tmp_path / "actuate_summary.json")
    assert s["peak_force_N"] == pytest.approx(0.25, rel=0.1)


def test_power_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 0, "power": {"profile": {"day_night": {"days": 2, "irradiance": 500}},
                                                    "policy": {"kind": "radio"}, "t_end": 172800, "log_dt": 600}})
    assert main(["power", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    s = read_json(tmp_path / "power_summary.json")
    assert s["cold_starts"] == 2
    rows = read_csv(tmp_path / "power.csv")
    assert rows[0][:4] == ["t_s", "v_store_V", "v_coil_V", "phase"]


def test_mission_fifty_metres(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 5, "mission": {"altitude": 50.0}})
    assert main(["mission", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    tel = read_csv(tmp_path / "telemetry.csv")
    alt = [float(r[4]) for r in tel[1:]]
    assert abs(alt[0] - 50.0) < 4.0 and abs(alt[-1]) < 4.0
    traj = read_csv(tmp_path / "trajectory.csv")
    assert traj[0] == ["t_s", "x_m", "y_m", "z_m", "mode", "phase"]
    assert read_json(tmp_path / "mission_summary.json")["outcome"] == "transitioned"


def test_disperse_byte_identical(tmp_path):
    doc = {"seed": 42, "disperse": {"n_trials": 8, "paired": True, "fractions": [0, 1],
                                    "scenario": {"altitude": 10.0}}}
    cfg = write_cfg(tmp_path, doc)
    before = cfg.read_bytes()
    outs = []
    for k, threads in enumerate((1, 3, 1)):
        out = tmp_path / f"o{k}"
        assert main(["disperse", "--config", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] == outs[2]
    assert set(outs[0]) == {"dispersal.csv", "landing_map.json", "paired.csv", "fraction_sweep.csv",
                            "disperse_summary.json"}
    assert cfg.read_bytes() == before
    m = read_json(tmp_path / "o0" / "landing_map.json")
    assert m["origin"] == [0.0, 0.0] and len(m["landings"]) == 8


def test_seed_flag_overrides(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 1, "disperse": {"n_trials": 3, "scenario": {"altitude": 5.0}}})
    main(["disperse", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "2"])
    main(["disperse", "--config", str(cfg), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "dispersal.csv").read_text().splitlines()
    b = (tmp_path / "b" / "dispersal.csv").read_text().splitlines()
    assert "seed=2" in a[0] and "seed=1" in b[0]
    assert a[2:] != b[2:]


def test_json_format(tmp_path):
    assert main(["power", "--out", str(tmp_path), "--format", "json"]) == 0
    d = read_json(tmp_path / "power.json")
    assert d["columns"][0] == "t_s" and len(d["rows"]) > 1


@pytest.mark.parametrize("doc, field", [
    ({"seed": 1, "mission": {"altitude": "high"}}, "mission.altitude"),
    ({"seed": 1, "mission": {"wind": {"speed": 3}}}, "mission.wind.speed"),
    ({"seed": 1, "mission": {"policy": {"kind": "laser"}}}, "mission.policy"),
    ({"seed": -1}, "seed"),
    ({"seed": 1, "flight": {}}, "flight"),
])
def test_config_errors(tmp_path, capsys, doc, field):
    cfg = write_cfg(tmp_path, doc)
    assert main(["mission", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_json_syntax_error_has_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n}\n')
    assert main(["energy", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["energy", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG


def test_numeric_failure_exit(tmp_path, monkeypatch):
    import leafout.cli as cli

    def boom(run):
        raise SolverError("diverged")

    monkeypatch.setitem(cli.COMMANDS, "energy", boom)
    assert main(["energy", "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_config_hash_canonical():
    a = parse_config('{"seed": 1, "energy": {"num": 11}}')
    b = parse_config('{"energy":{"num":11},\n "seed":1}')
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(parse_config('{"seed": 2, "energy": {"num": 11}}'))


def test_build_nested_scenario():
    sc = build(DropScenario, {"altitude": 20, "wind": {"mean_speed": 2}, "actuator": {"magnet": {"diameter": 3e-3}}},
               "mission")
    assert sc.altitude == 20.0 and sc.wind.mean_speed == 2.0 and sc.actuator.magnet.diameter == 3e-3
    with pytest.raises(ConfigError) as e:
        build(DropScenario, {"dt": 0.1}, "mission")
    assert e.value.field == "mission"


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "leafout", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "leafout" in r.stdout
