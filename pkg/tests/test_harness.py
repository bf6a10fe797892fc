import filecmp

import numpy as np
import pytest
import yaml

from ddmpc.errors import DimensionError
from ddmpc.harness.cli import build_parser, main
from ddmpc.harness.common import Report, excitation, velocity_reference
from ddmpc.harness.config import PRESETS, config_from_dict, load_config
from ddmpc.harness.experiments import EXPERIMENTS, run_collect, run_repeat, run_sweep, run_track
from ddmpc.plants import coupling_matrix


@pytest.fixture(scope="module")
def desk():
    return load_config(preset="desk")


def test_presets_load_and_merge(desk):
    base = load_config()
    assert base.mlp.hidden == 256 and desk.mlp.hidden == 64
    assert desk.sweep.T_a == 300 and base.sweep.T_a == 1200
    assert desk.planner.R == base.planner.R
    pc = desk.planner_config()
    assert (pc.m, pc.c, pc.l, pc.n_ini) == (9, 6, 6, 2)


def test_yaml_file_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 7, "planner": {"l": 5}}))
    cfg = load_config(path, overrides={"planner": {"Q": 1.0}})
    assert cfg.seed == 7 and cfg.planner.l == 5 and cfg.planner.Q == 1.0
    assert cfg.planner.n_ini == 2
    assert cfg.base_dir == tmp_path


def test_config_rejects_bad_input(tmp_path):
    raw = yaml.safe_load(PRESETS["default"][0].read_text())
    with pytest.raises(ValueError, match="unknown config blocks"):
        config_from_dict({**raw, "extra": {}})
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_dict({**raw, "planner": {**raw["planner"], "gain": 1}})
    with pytest.raises(DimensionError):
        config_from_dict({**raw, "refgen": {**raw["refgen"], "targets": [[1.0, 2.0]]}})
    with pytest.raises(ValueError):
        config_from_dict({**raw, "sweep": {**raw["sweep"], "N_list": [5]}})
    with pytest.raises(FileNotFoundError):
        config_from_dict({**raw, "dsa": {**raw["dsa"], "manifest": "missing.csv"}}, tmp_path)


def test_parser_lists_every_experiment():
    parser = build_parser()
    for name in EXPERIMENTS:
        args = parser.parse_args([name, "--out", "x", "--seed", "3"])
        assert args.command == name and args.seed == 3
    with pytest.raises(SystemExit):
        parser.parse_args(["nope", "--out", "x"])
    with pytest.raises(SystemExit):
        parser.parse_args(["collect"])


def test_cli_collect_exit_code(tmp_path, capsys):
    assert main(["collect", "--preset", "desk", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert "[collect]" in capsys.readouterr().out
    assert (tmp_path / "manifest.csv").exists()
    assert len(list(tmp_path.glob("data_load_*.csv"))) == 6


def test_reports_are_reproducible(tmp_path, desk):
    a, b = tmp_path / "a", tmp_path / "b"
    run_collect(desk, 5, a)
    run_collect(desk, 5, b)
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors
    run_collect(desk, 6, b)
    assert not filecmp.cmp(a / "data_load_0.csv", b / "data_load_0.csv", shallow=False)


def test_failing_check_fails_report(tmp_path):
    rep = Report("x")
    rep.check("good", True)
    assert rep.passed
    rep.check("bad", False, "detail")
    assert not rep.passed
    assert "FAIL  bad  detail" in rep.summary()
    rep.metrics["v"] = np.float64(1.5)
    rep.write(tmp_path)
    assert yaml.safe_load((tmp_path / "metrics.yaml").read_text()) == {"v": 1.5}
    assert not (tmp_path / "timing.yaml").exists()


def test_excitation_is_seeded_and_clipped():
    a = excitation(500, 9, np.random.default_rng(0), vel_clip=100.0)
    b = excitation(500, 9, np.random.default_rng(0), vel_clip=100.0)
    np.testing.assert_array_equal(a, b)
    assert np.abs(a).max() <= 100.0
    assert a.shape == (500, 9)


def test_velocity_reference_backward_difference():
    W = coupling_matrix(3)
    y = np.cumsum(np.ones((4, 6)), axis=0)
    u = velocity_reference(None, y, 0.5, W)
    np.testing.assert_array_equal(u[0], 0.0)
    np.testing.assert_allclose(u[1:], np.tile(np.linalg.pinv(W) @ np.ones(6) / 0.5, (3, 1)))


def test_sweep_flags_points_below_bound(tmp_path, desk):
    cfg = load_config(preset="desk", overrides={"sweep": {"T_a": 40, "repeats": 1}})
    rep = run_sweep(cfg, 0, tmp_path, N_list=[150, 300], n_ini_list=[8], l_list=[4])
    header, rows = rep.tables["sweep"]
    flags = {r[0]: r[4] for r in rows}
    assert flags == {150: 1, 300: 0}
    assert all(r[3] == 270 for r in rows)


def test_repeat_spread_scales_with_noise(tmp_path, desk):
    # two poses and a handful of cycles keep this affordable
    cfg = load_config(preset="desk", overrides={"refgen": {"poses": desk.refgen.poses[:2]}})
    std = [run_repeat(cfg, 0, tmp_path / str(n), noise_std=n, cycles=6).metrics["average_std_mm"]
           for n in (0.05, 0.1)]
    assert 1.5 <= std[1] / std[0] <= 2.5
    header, rows = run_repeat(cfg, 0, tmp_path / "t", noise_std=0.05, cycles=2).tables["repeat_table"]
    assert header == ["pose", "mean_mm", "std_mm", "three_sigma_mm"]
    assert [r[0] for r in rows] == ["P1", "P2", "Average"]


def test_track_ablation_and_determinism(tmp_path, desk):
    a = run_track(desk, 0, tmp_path / "a")
    b = run_track(desk, 0, tmp_path / "b")
    # wall-clock numbers live in timing.yaml and the step log; everything else is bitwise stable
    for name in ("track_table.csv", "track_traces.csv", "metrics.yaml", "checks.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    free = run_track(desk, 0, tmp_path / "d0", half_width=0.0)
    assert free.metrics["nonconverged_steps"] == 0
    assert free.metrics["mpc_average_deg"] < a.metrics["mpc_average_deg"]
    assert free.metrics["pid_average_deg"] < a.metrics["pid_average_deg"]
    assert b.passed
