import csv
import json

import numpy as np
import pytest
import yaml

from drafd.cli import main, read_schedule
from drafd.config import ConfigError, load_config

SMALL = {
    "bank": "three-tank",
    "radius": 0.5,
    "horizon": 200,
    "measurement_interval": 100,
    "mc_count": 150,
    "seed": 7,
    "realization": 2,
    "solver": {"grid_points": 3, "nm_maxfev": 4},
}


def write_cfg(path, **changes):
    data = dict(SMALL, **changes)
    path.write_text(yaml.safe_dump(data))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def design_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(root / "c.yaml")
    out = root / "design"
    assert main(["design", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def test_design_writes_artifacts(design_run):
    cfg, out = design_run
    for name in ("schedule.csv", "design_ledger.csv", "pdfs.csv", "roi.csv", "manifest.json"):
        assert (out / name).exists()
    sched = read_schedule(out / "schedule.csv")
    assert list(sched.breakpoints) == [0.0, 100.0] and sched.horizon == 200.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and set(manifest["files"]) >= {"schedule.csv", "design_ledger.csv"}
    ledger = read_csv(out / "design_ledger.csv")
    assert ledger[0][:3] == ["interval", "t_start", "t_end"]
    assert sum(r[-1] == "1" for r in ledger[1:]) == 2  # one chosen input per interval


def test_design_is_byte_identical(design_run, tmp_path):
    cfg, out = design_run
    again = tmp_path / "again"
    assert main(["design", "--config", str(cfg), "--out", str(again)]) == 0
    for name in ("schedule.csv", "design_ledger.csv", "pdfs.csv", "roi.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_evaluate_writes_tables_and_plots(design_run, tmp_path):
    cfg, out = design_run
    ev = tmp_path / "ev"
    assert main(["evaluate", "--config", str(cfg), "--schedule", str(out / "schedule.csv"), "--out", str(ev)]) == 0
    areas = read_csv(ev / "areas.csv")
    assert areas[0] == ["t_m", "area_0_1", "area_0_2", "area_1_2", "total"]
    assert len(areas) == 3
    dec = read_csv(ev / "decisions.csv")
    assert dec[0][-1] == "decision" and all(r[-1] in "012" for r in dec[1:])
    for name in ("areas.svg", "pdfs_final.svg", "schedule.svg"):
        assert (ev / name).stat().st_size > 0
    # numeric tables are reproducible
    ev2 = tmp_path / "ev2"
    main(["evaluate", "--config", str(cfg), "--schedule", str(out / "schedule.csv"), "--out", str(ev2)])
    assert (ev / "areas.csv").read_bytes() == (ev2 / "areas.csv").read_bytes()


def test_out_of_box_schedule_is_rejected(design_run, tmp_path, capsys):
    cfg, _ = design_run
    bad = tmp_path / "bad.csv"
    bad.write_text("t_start,t_end,u1,u2\n0,100,0.0002,0\n100,200,0,0\n")
    assert main(["evaluate", "--config", str(cfg), "--schedule", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "outside" in capsys.readouterr().err
    assert not (tmp_path / "o" / "areas.csv").exists()


def test_invalid_radius_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml", radius=1.5)
    assert main(["design", "--config", str(cfg)]) == 1
    assert "radius" in capsys.readouterr().err


@pytest.mark.parametrize("changes,field", [
    ({"radius": [0, 0.2]}, "radius"),
    ({"family": "cauchy"}, "family"),
    ({"bogus": 1}, "bogus"),
    ({"measurement_times": [100, 50]}, "measurement_times"),
    ({"solver": {"grid": 3}}, "solver"),
    ({"parameters": {"c2": [0.8, -1]}}, "parameters.c2"),
    ({"bank": "nowhere"}, "bank"),
])
def test_config_errors_name_the_field(tmp_path, changes, field):
    path = write_cfg(tmp_path / "c.yaml", **changes)
    with pytest.raises(ConfigError, match=field):
        load_config(path).design_options()


def test_runtime_failure_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml", bank="drafd.sysmodel:no_such_factory")
    assert main(["design", "--config", str(cfg)]) == 1
    cfg = write_cfg(tmp_path / "c.yaml", bank="drafd.sysmodel:sample_stream")
    assert main(["design", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "runtime error" in capsys.readouterr().err


def test_environment_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("DRAFD_OUT", str(tmp_path / "root"))
    cfg = write_cfg(tmp_path / "c.yaml", horizon=100, solver={"grid_points": 2, "nm_maxfev": 0})
    assert main(["design", "--config", str(cfg)]) == 0
    assert (tmp_path / "root" / "design" / "schedule.csv").exists()


def test_overrides_from_flags(tmp_path):
    cfg = load_config(write_cfg(tmp_path / "c.yaml"), seed=3, mc_count=500)
    assert (cfg.seed, cfg.mc_count) == (3, 500)


def test_small_commands(capsys):
    assert main(["bound", "1", "1", "0", "1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1 - 1 / 6, abs=1e-15)
    assert main(["tv", "0", "1", "2", "1"]) == 0
    assert abs(float(capsys.readouterr().out) - 0.682689) < 1e-6
    assert main(["roi", "0.4", "0.05", "0"]) == 0
    assert [float(v) for v in capsys.readouterr().out.split()] == [0.4, 0.4, 0.05, 0.05]
    assert main(["bound", "1", "1", "0"]) == 1
    assert main(["roi", "0.4", "0.05", "2"]) == 1


def test_sequential_decision_option(design_run, tmp_path):
    cfg, out = design_run
    seq = write_cfg(tmp_path / "s.yaml", decision="sequential")
    assert main(["evaluate", "--config", str(seq), "--schedule", str(out / "schedule.csv"),
                 "--out", str(tmp_path / "e")]) == 0
    assert np.all(np.isin([r[-1] for r in read_csv(tmp_path / "e" / "decisions.csv")[1:]], ["0", "1", "2"]))
