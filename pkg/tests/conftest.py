import math

import numpy as np
import pytest

from jointcal.camera import CameraIntrinsics
from jointcal.geometry import Pose, quat_from_axis_angle
from jointcal.providers import make_scene
from jointcal.residuals import ParamBlock
from jointcal.simulation import kitti_like_truth


@pytest.fixture
def kitti_truth():
    return kitti_like_truth()


@pytest.fixture
def small_camera():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, width=640, height=480)


@pytest.fixture
def small_truth():
    K = CameraIntrinsics(520.0, 515.0, 318.0, 244.0, k1=-0.2, k2=0.05, k3=-0.01, t1=1e-3, t2=-5e-4,
                         width=640, height=480)
    pose = Pose(quat_from_axis_angle([0.3, -0.5, 0.2], math.radians(7.0)), (0.1, -0.05, 0.2))
    return ParamBlock(K, pose)


@pytest.fixture
def small_scene(small_truth):
    return make_scene(small_truth, n_frames=4, points_per_frame=60, seed=7)


def random_quaternion(rng):
    from jointcal.geometry import Quaternion

    v = rng.normal(size=4)
    return Quaternion(*(v / np.linalg.norm(v)))
