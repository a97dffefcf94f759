"""Calibration quality metrics: extrinsic errors and ray-sampled reprojection error."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .camera import CameraIntrinsics, max_valid_radius, undistort_normalized
from .errors import NoValidRays
from .geometry import Pose, rotation_angle_between

DEFAULT_N_RAYS = 10_000


@dataclass(frozen=True)
class CalibrationError:
    translation_cm: float
    rotation_deg: float
    intrinsic_reproj_px: float
    n_rays: int
    excluded_rays: int = 0
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def extrinsic_error(estimated: Pose, truth: Pose) -> tuple[float, float]:
    """Translation error in centimeters and shortest-arc rotation error in degrees."""
    dt = np.asarray(estimated.translation) - np.asarray(truth.translation)
    return float(np.linalg.norm(dt) * 100.0), rotation_angle_between(estimated.rotation, truth.rotation)


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("median of empty sequence")
    return float(v[(v.size - 1) // 2])


def _project_normalized(x, y, K: CameraIntrinsics):
    """Pixel offsets from the principal point for normalized coordinates."""
    k1, k2, k3, t1, t2 = K.distortion
    r2 = x * x + y * y
    f = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
    xd = x * f + 2.0 * t1 * x * y + t2 * (r2 + 2.0 * x * x)
    yd = y * f + 2.0 * t2 * x * y + t1 * (r2 + 2.0 * y * y)
    return K.fx * xd, K.fy * yd


def ray_reprojection_errors(estimated: CameraIntrinsics, truth: CameraIntrinsics, n_rays: int = DEFAULT_N_RAYS,
                            rng_seed: int = 0, pixels=None):
    """Per-ray pixel distances between the two models.

    Rays are unprojections (under ``truth``) of pixels drawn uniformly over
    the truth image, or of the given ``pixels``. Returns
    ``(distances, n_excluded)``; rays outside the valid radius of either
    model are excluded.
    """
    if pixels is None:
        if n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        rng = np.random.default_rng(rng_seed)
        pixels = np.column_stack([rng.uniform(0.0, truth.width, n_rays), rng.uniform(0.0, truth.height, n_rays)])
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    x, y, ok = undistort_normalized((pixels[:, 0] - truth.cx) / truth.fx, (pixels[:, 1] - truth.cy) / truth.fy,
                                    truth.distortion)
    ok &= np.hypot(x, y) <= max_valid_radius(estimated.distortion)
    x, y = x[ok], y[ok]
    ue, ve = _project_normalized(x, y, estimated)
    ut, vt = _project_normalized(x, y, truth)
    # principal-point difference added separately so pure shifts are exact
    du = (ue - ut) + (estimated.cx - truth.cx)
    dv = (ve - vt) + (estimated.cy - truth.cy)
    return np.hypot(du, dv), int(np.count_nonzero(~ok))


def intrinsic_reproj_error(estimated: CameraIntrinsics, truth: CameraIntrinsics, n_rays: int = DEFAULT_N_RAYS,
                           rng_seed: int = 0) -> float:
    """Median pixel distance between projections of sampled rays under both models."""
    d, _ = ray_reprojection_errors(estimated, truth, n_rays, rng_seed)
    if d.size == 0:
        raise NoValidRays("no sampled ray is valid under both models")
    return lower_median(d)


def calibration_error(est_intr: CameraIntrinsics, est_pose: Pose, truth_intr: CameraIntrinsics, truth_pose: Pose,
                      n_rays: int = DEFAULT_N_RAYS, rng_seed: int = 0) -> CalibrationError:
    t_cm, r_deg = extrinsic_error(est_pose, truth_pose)
    d, excl = ray_reprojection_errors(est_intr, truth_intr, n_rays, rng_seed)
    if d.size == 0:
        raise NoValidRays("no sampled ray is valid under both models")
    return CalibrationError(t_cm, r_deg, lower_median(d), int(n_rays), excl, int(rng_seed))


def aggregate(errors: Iterable[CalibrationError]) -> dict:
    """Mean, standard deviation and median of each error column over runs."""
    errors = list(errors)
    out = {}
    for name in ("translation_cm", "rotation_deg", "intrinsic_reproj_px"):
        v = np.array([getattr(e, name) for e in errors])
        out[name] = {"mean": float(v.mean()), "std": float(v.std()), "median": float(np.median(v)), "n": int(v.size)}
    return out
