import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jointcal.camera import CameraIntrinsics, PixelPoint, project
from jointcal.errors import BehindCamera
from jointcal.geometry import Pose, Quaternion, quat_from_axis_angle
from jointcal.residuals import (Correspondence, CorrespondenceSet, ParamBlock, batch_residuals, cauchy_loss,
                                principal_point_prior, reprojection_residual, residual_jacobian)
from jointcal.solver import SolveOptions, evaluate_objective

from .helpers import random_configurations
from .oracles import central_difference_jacobians, jacobian_relative_error


@pytest.fixture
def simple_block():
    K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)
    return ParamBlock(K, Pose.identity())


def test_residual_zero_for_self_consistent(small_truth):
    X = (0.3, -0.2, 4.0)
    px = project(X, small_truth.intrinsics, small_truth.extrinsics).pixel
    np.testing.assert_allclose(reprojection_residual(Correspondence(X, px), small_truth), 0.0, atol=1e-12)


def test_residual_offset_and_weight(simple_block):
    X = (1.0, 0.0, 2.0)  # projects to (570, 240)
    c = Correspondence(X, PixelPoint(571.0, 240.0))
    np.testing.assert_allclose(reprojection_residual(c, simple_block), [1.0, 0.0], atol=1e-12)
    c = Correspondence(X, PixelPoint(571.0, 240.0), weight=4.0)
    np.testing.assert_allclose(reprojection_residual(c, simple_block), [2.0, 0.0], atol=1e-12)


def test_residual_behind_camera(simple_block):
    with pytest.raises(BehindCamera):
        reprojection_residual(Correspondence((0, 0, -1), PixelPoint(0, 0)), simple_block)
    with pytest.raises(BehindCamera):
        residual_jacobian(Correspondence((0, 0, -1), PixelPoint(0, 0)), simple_block)


def test_cauchy_examples():
    rho, d1, _ = cauchy_loss(0.0)
    assert rho == 0.0 and d1 == 1.0
    for c in (0.5, 1.0, 3.0):
        assert cauchy_loss(c * c, c)[0] == pytest.approx(c * c * math.log(2), rel=1e-15)


@given(st.floats(0, 1e8), st.floats(0.1, 10))
def test_cauchy_bounded_by_square(s, c):
    assert cauchy_loss(s, c)[0] <= s * (1 + 1e-15)


def test_cauchy_monotone_concave():
    c = 1.7
    s = np.linspace(0.0, 1e6 * c * c, 100_001)
    rho, d1, d2 = cauchy_loss(s, c)
    assert np.all(np.diff(rho) > 0)
    assert np.all(d1 > 0) and np.all(d2 < 0)
    # concavity from samples: second differences nonpositive
    assert np.all(np.diff(rho, 2) <= 1e-9 * rho[-1])


def test_cauchy_derivatives_match_differences():
    c = 2.0
    for s in (0.0, 0.3, 4.0, 50.0):
        h = 1e-6 * max(s, 1)
        d1 = (cauchy_loss(s + h, c)[0] - cauchy_loss(max(s - h, 0), c)[0]) / (s + h - max(s - h, 0))
        assert cauchy_loss(s, c)[1] == pytest.approx(d1, rel=1e-6)
        d2 = (cauchy_loss(s + h, c)[1] - cauchy_loss(max(s - h, 0), c)[1]) / (s + h - max(s - h, 0))
        assert cauchy_loss(s, c)[2] == pytest.approx(d2, rel=1e-5)


def test_prior_examples(simple_block):
    c0 = np.array([320.0, 240.0])
    np.testing.assert_array_equal(principal_point_prior(simple_block, c0, 10.0), [0.0, 0.0])
    np.testing.assert_allclose(principal_point_prior(simple_block, c0 - [10.0, 0.0], 10.0), [1.0, 0.0])
    a = principal_point_prior(simple_block, c0 - [6.0, 2.0], 5.0)
    b = principal_point_prior(simple_block, c0 - [6.0, 2.0], 10.0)
    np.testing.assert_allclose(b, a / 2)
    with pytest.raises(ValueError):
        principal_point_prior(simple_block, c0, 0.0)


def test_jacobian_hand_derived_entries():
    K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)
    p = ParamBlock(K, Pose.identity())
    J = residual_jacobian(Correspondence((1.0, 0.5, 2.0), PixelPoint(0, 0)), p)
    assert J[0, 2] == -1.0 and J[1, 3] == -1.0
    assert J[0, 3] == 0.0 and J[1, 2] == 0.0
    # du/dfx = x_d = 0.5, dv/dfy = y_d = 0.25 without distortion
    assert J[0, 0] == pytest.approx(-0.5, abs=1e-15)
    assert J[1, 1] == pytest.approx(-0.25, abs=1e-15)


def test_jacobian_matches_finite_differences():
    configs = list(random_configurations(200, seed=11))
    J = np.array([residual_jacobian(Correspondence(tuple(X), PixelPoint(*px)), p) for p, X, px in configs])
    ref = central_difference_jacobians(
        [p.intrinsics.as_vector() for p, _, _ in configs],
        [p.extrinsics.rotation.as_array() for p, _, _ in configs],
        [p.extrinsics.t for p, _, _ in configs],
        [X for _, X, _ in configs], [px for _, _, px in configs])
    assert jacobian_relative_error(J, ref).max() < 1e-5


def test_frozen_columns_zeroed_exactly(small_truth):
    mask = (True, False, True, False, False, True, True, False, True)
    p = small_truth.with_frozen(mask)
    c = Correspondence((0.4, -0.3, 5.0), PixelPoint(300.0, 200.0))
    J = residual_jacobian(c, p)
    Jfull = residual_jacobian(c, small_truth)
    for j, frozen in enumerate(mask):
        if frozen:
            assert np.all(J[:, j] == 0.0)
        else:
            assert np.array_equal(J[:, j], Jfull[:, j])
    assert np.array_equal(J[:, 9:], Jfull[:, 9:])


def test_batch_matches_single(small_truth, small_scene):
    cs = CorrespondenceSet(small_scene.points, np.zeros((len(small_scene), 2)) + [300.0, 200.0], None)
    res, J, front = batch_residuals(cs, small_truth)
    for i in range(0, len(cs), 37):
        c = Correspondence(tuple(cs.points[i]), PixelPoint(*cs.pixels[i]))
        np.testing.assert_allclose(res[i], reprojection_residual(c, small_truth), rtol=1e-13, atol=1e-10)
        np.testing.assert_allclose(J[i], residual_jacobian(c, small_truth), rtol=1e-13, atol=1e-10)


def test_objective_invariant_to_quaternion_sign(small_truth, small_scene):
    rng = np.random.default_rng(1)
    cs = CorrespondenceSet(small_scene.points, rng.uniform([0, 0], [640, 480], (len(small_scene), 2)), None)
    q = small_truth.extrinsics.rotation
    flipped = ParamBlock(small_truth.intrinsics, Pose(-q, small_truth.extrinsics.translation))
    a = evaluate_objective(cs, small_truth, SolveOptions(), c0=[300, 250])
    b = evaluate_objective(cs, flipped, SolveOptions(), c0=[300, 250])
    assert b == pytest.approx(a, rel=1e-12)


def test_correspondence_validation():
    with pytest.raises(ValueError):
        Correspondence((0, 0, math.nan), PixelPoint(0, 0))
    with pytest.raises(ValueError):
        Correspondence((0, 0, 1), PixelPoint(0, 0), weight=-1)
