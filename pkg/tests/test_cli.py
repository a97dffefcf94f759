import json
import subprocess
import sys

import numpy as np
import pytest

from jointcal.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from jointcal.io import load_calibration, save_calibration
from jointcal.remap import RemapField, read_image, write_image


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text(json.dumps({
        "schema_version": "jointcal.config/1",
        "simulation": {"n_frames": 10, "points_per_frame": 50},
    }))
    return path


@pytest.fixture
def simulated(tmp_path, sim_config):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(sim_config), "--seed", "3", "--out", str(out)]) == EXIT_OK
    return out


def test_simulate_outputs(simulated):
    names = sorted(p.name for p in simulated.iterdir())
    assert names == ["config.json", *[f"correspondences_{i:02d}.csv" for i in range(1, 12)], "initial.json",
                     "truth.json"]
    cfg = json.loads((simulated / "config.json").read_text())
    assert cfg["seed"] == 3 and len(cfg["correspondences"]) == 11


def test_simulate_deterministic(tmp_path, sim_config, simulated):
    other = tmp_path / "again"
    main(["simulate", "--config", str(sim_config), "--seed", "3", "--out", str(other)])
    for p in simulated.iterdir():
        assert (other / p.name).read_bytes() == p.read_bytes()


def test_calibrate_and_evaluate(simulated, capsys):
    cfg = str(simulated / "config.json")
    assert main(["calibrate", "--config", cfg]) == EXIT_OK
    result = simulated / "result"
    err = json.loads((result / "errors.json").read_text())
    assert err["intrinsic_reproj_px"] < 5.0 and err["rotation_deg"] < 0.5
    doc = json.loads((result / "calibration.json").read_text())
    assert len(doc["trace"]) == 11
    capsys.readouterr()
    assert main(["evaluate", "--estimate", str(result / "calibration.json"),
                 "--truth", str(simulated / "truth.json"), "--out", str(result / "eval")]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((result / "eval" / "errors.json").read_text())
    # same seed and rays as the calibrate run
    assert printed["translation_cm"] == err["translation_cm"]


def test_remap_command(tmp_path, simulated):
    truth = load_calibration(simulated / "truth.json")
    img = np.random.default_rng(0).integers(0, 256, (truth.intrinsics.height, truth.intrinsics.width),
                                            dtype=np.uint8)
    write_image(tmp_path / "frame.png", img)
    out = tmp_path / "warped"
    code = main(["remap", "--source", str(simulated / "truth.json"), "--target", str(simulated / "truth.json"),
                 "--image", str(tmp_path / "frame.png"), "--out", str(out)])
    assert code == EXIT_OK
    warped = read_image(out / "frame.png")
    assert np.array_equal(warped[1:-1, 1:-1], img[1:-1, 1:-1])
    assert RemapField.load(out / "field.rmap").valid.all()


def test_remap_kitti_source(tmp_path, simulated):
    (tmp_path / "calib.txt").write_text(
        "S_03: 1242 375\nK_03: 718.856 0 607.1928 0 718.856 185.2157 0 0 1\nD_03: 0 0 0 0 0\n"
        "R: 1 0 0 0 1 0 0 0 1\nT: 0 0 0\n")
    code = main(["remap", "--source", str(tmp_path / "calib.txt"), "--target", str(simulated / "truth.json"),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_OK


def test_parse_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["calibrate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_missing_paths_exit_code(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema_version": "jointcal.config/1", "correspondences": ["nope.csv"],
                               "initial": "nope.json"}))
    assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_numerical_failure_exit_code(tmp_path, simulated):
    # a distortion-heavy estimate whose valid radius excludes every sampled ray
    truth = load_calibration(simulated / "truth.json")
    from dataclasses import replace

    from jointcal.residuals import ParamBlock

    tiny = replace(truth.intrinsics, fx=1.0, fy=1.0, k1=0.0, k2=0.0, k3=0.0, t1=0.0, t2=0.0)
    save_calibration(ParamBlock(tiny, truth.extrinsics), path=tmp_path / "t.json")
    save_calibration(ParamBlock(replace(tiny, k1=-3.0), truth.extrinsics), path=tmp_path / "e.json")
    code = main(["evaluate", "--estimate", str(tmp_path / "e.json"), "--truth", str(tmp_path / "t.json"),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_NUMERICAL


def test_too_few_correspondences_exit_code(tmp_path, simulated):
    lines = (simulated / "correspondences_01.csv").read_text().splitlines()
    (simulated / "few.csv").write_text("\n".join(lines[:4]) + "\n")
    cfg = json.loads((simulated / "config.json").read_text())
    cfg["correspondences"] = ["few.csv"]
    (simulated / "few.json").write_text(json.dumps(cfg))
    assert main(["calibrate", "--config", str(simulated / "few.json")]) == EXIT_INVALID


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "jointcal", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("simulate", "calibrate", "evaluate", "remap"):
        assert cmd in proc.stdout
