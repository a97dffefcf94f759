import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointcal.errors import MissingKey, NonOrthonormalRotation, ParseError, ValidationError, VersionError
from jointcal.geometry import Pose, Quaternion
from jointcal.io import (CSV_HEADER, RunConfig, calibration_from_dict, calibration_to_dict, config_to_dict,
                         load_calibration, load_camera, load_config, load_correspondence_set,
                         load_correspondences, load_kitti_calib, save_calibration, save_correspondences)
from jointcal.providers import NoiseSchedule, synthetic_correspondences
from jointcal.solver import solve

HEADER = ",".join(CSV_HEADER) + "\n"


def write(path, text):
    path.write_text(text)
    return path


def test_three_rows(tmp_path):
    f = write(tmp_path / "c.csv", HEADER + "a,1,2,3,4,5,1\nb,1,2,3,4,5,0.5\na,6,7,8,9,10,0\n")
    cs = load_correspondences(f)
    assert len(cs) == 3
    assert [c.frame_id for c in cs] == ["a", "a", "b"]
    assert cs[1].point == (6.0, 7.0, 8.0) and cs[1].pixel == (9.0, 10.0) and cs[1].weight == 0.0


def test_header_only(tmp_path):
    assert load_correspondences(write(tmp_path / "c.csv", HEADER)) == []


@pytest.mark.parametrize("row,exc,line", [
    ("a,1,2,nan,4,5,1", ValidationError, 3),
    ("a,1,2,inf,4,5,1", ValidationError, 3),
    ("a,1,2,3,4,5,1.5", ValidationError, 3),
    ("a,1,2,3,4,5", ParseError, 3),
    ("a,1,2,x,4,5,1", ParseError, 3),
])
def test_bad_rows(tmp_path, row, exc, line):
    f = write(tmp_path / "c.csv", HEADER + "a,1,2,3,4,5,1\n" + row + "\n")
    with pytest.raises(exc) as info:
        load_correspondences(f)
    assert info.value.line == line
    assert f":{line}" in str(info.value)


def test_missing_header(tmp_path):
    with pytest.raises(ParseError):
        load_correspondences(write(tmp_path / "c.csv", "a,1,2,3,4,5,1\n"))
    with pytest.raises(ParseError):
        load_correspondences(write(tmp_path / "c.csv", ""))


def test_csv_round_trip(tmp_path, small_truth, small_scene):
    cs, _ = synthetic_correspondences(small_scene, small_truth, NoiseSchedule(), 0, 1)
    save_correspondences(cs, tmp_path / "c.csv")
    back = load_correspondence_set(tmp_path / "c.csv")
    assert np.array_equal(back.points, cs.points) and np.array_equal(back.pixels, cs.pixels)
    assert list(back.frame_ids) == list(cs.frame_ids)


KITTI = """calib_time: 09-Jan-2012 13:57:47
S_03: 1.392000e+03 5.120000e+02
K_03: 500 0 320 0 500 240 0 0 1
D_03: 0.1 -0.05 0.001 0.002 0.01
R: 1 0 0 0 1 0 0 0 1
T: 0 0 0
"""


def test_kitti_example(tmp_path):
    K, T = load_kitti_calib(write(tmp_path / "calib.txt", KITTI))
    assert (K.fx, K.fy, K.cx, K.cy) == (500.0, 500.0, 320.0, 240.0)
    assert (K.k1, K.k2, K.t1, K.t2, K.k3) == (0.1, -0.05, 0.001, 0.002, 0.01)
    assert (K.width, K.height) == (1392, 512)
    assert T == Pose.identity()


def test_kitti_separate_extrinsics(tmp_path):
    cam = write(tmp_path / "calib_cam_to_cam.txt", KITTI.replace("R: 1 0 0 0 1 0 0 0 1\nT: 0 0 0\n", ""))
    velo = write(tmp_path / "calib_velo_to_cam.txt", "R: 0 -1 0 0 0 -1 1 0 0\nT: -0.004 -0.076 -0.27\n")
    K, T = load_kitti_calib(cam, velo_path=velo)
    np.testing.assert_allclose(T.rotation.to_matrix(), [[0, -1, 0], [0, 0, -1], [1, 0, 0]], atol=1e-15)
    assert T.translation == (-0.004, -0.076, -0.27)


def test_kitti_missing_key(tmp_path):
    f = write(tmp_path / "calib.txt", KITTI.replace("D_03", "D_02"))
    with pytest.raises(MissingKey, match="D_03"):
        load_kitti_calib(f)
    with pytest.raises(KeyError):
        load_kitti_calib(f)


def test_kitti_non_orthonormal(tmp_path):
    f = write(tmp_path / "calib.txt", KITTI.replace("R: 1 0 0", "R: 1.01 0 0"))
    with pytest.raises(NonOrthonormalRotation):
        load_kitti_calib(f)
    # within tolerance is accepted
    load_kitti_calib(write(tmp_path / "ok.txt", KITTI.replace("R: 1 0 0", "R: 1.0000001 0 0")))


def test_calibration_round_trip(tmp_path, small_truth, small_scene):
    cs, _ = synthetic_correspondences(small_scene, small_truth, NoiseSchedule(), 2, 0)
    params, report = solve(cs, small_truth, small_truth.intrinsics.principal_point)
    save_calibration(params, report, tmp_path / "cal.json")
    back = load_calibration(tmp_path / "cal.json")
    assert back == params
    doc = json.loads((tmp_path / "cal.json").read_text())
    assert doc["schema_version"] == "jointcal.calibration/1"
    assert doc["extrinsics"]["quaternion_wxyz"][0] == params.extrinsics.rotation.w
    assert doc["report"]["termination"] == report.termination.value
    assert load_camera(tmp_path / "cal.json") == params


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=50)
@given(st.floats(100, 2000), st.floats(0.01, 0.99), finite, finite, finite)
def test_round_trip_bit_exact(f, frac, tx, ty, tz):
    from jointcal.camera import CameraIntrinsics
    from jointcal.residuals import ParamBlock

    q = Quaternion(0.3, -0.5, 0.1, 0.8).normalized()
    p = ParamBlock(CameraIntrinsics(f, f * 1.0000001, 640 * frac, 480 * frac, k1=-frac / 7, width=640, height=480),
                   Pose(q, (tx, ty, tz)))
    back = calibration_from_dict(json.loads(json.dumps(calibration_to_dict(p))))
    assert back == p


def test_version_and_missing_field(small_truth):
    doc = calibration_to_dict(small_truth)
    with pytest.raises(VersionError):
        calibration_from_dict({**doc, "schema_version": "jointcal.calibration/99"})
    broken = json.loads(json.dumps(doc))
    del broken["intrinsics"]["cy"]
    with pytest.raises(ParseError, match="intrinsics.cy"):
        calibration_from_dict(broken)
    broken = json.loads(json.dumps(doc))
    broken["extrinsics"]["quaternion_wxyz"] = [2.0, 0.0, 0.0, 0.0]
    with pytest.raises(ValidationError):
        calibration_from_dict(broken)


def test_invalid_json(tmp_path):
    with pytest.raises(ParseError):
        load_calibration(write(tmp_path / "x.json", "{not json"))


def test_config(tmp_path):
    write(tmp_path / "c.csv", HEADER)
    cfg_path = write(tmp_path / "run.json", json.dumps({
        "schema_version": "jointcal.config/1", "correspondences": "c.csv", "seed": 4,
        "solver": {"prior_sigma": "inf", "cauchy_scale": 2.0},
        "noise": {"per_iteration_pixel_sigma": [3, 2, 1]},
    }))
    cfg = load_config(cfg_path)
    assert cfg.correspondences == ["c.csv"] and cfg.seed == 4
    assert cfg.resolve("c.csv") == tmp_path / "c.csv"
    opts = cfg.solve_options()
    assert not opts.prior_enabled and opts.cauchy_scale == 2.0
    assert cfg.noise_schedule().per_iteration_pixel_sigma == (3.0, 2.0, 1.0)
    assert config_to_dict(cfg)["seed"] == 4


@pytest.mark.parametrize("doc,exc", [
    ({"correspondences": []}, ParseError),
    ({"schema_version": "jointcal.config/0"}, VersionError),
    ({"schema_version": "jointcal.config/1", "bogus": 1}, ValidationError),
    ({"schema_version": "jointcal.config/1", "correspondences": ["missing.csv"]}, ValidationError),
])
def test_config_errors(tmp_path, doc, exc):
    with pytest.raises(exc):
        load_config(write(tmp_path / "run.json", json.dumps(doc)))


def test_default_run_config():
    cfg = RunConfig()
    assert cfg.n_intr == 5 and cfg.n_total == 11 and math.isclose(cfg.solve_options().prior_sigma, 10.0)
