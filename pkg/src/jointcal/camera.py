"""Pinhole camera with radial-tangential (Brown-Conrady) distortion.

Distortion coefficients are stored internally as ``(k1, k2, k3, t1, t2)``.
File formats that use the ``k1 k2 t1 t2 k3`` layout convert through
:func:`distortion_from_file_order` / :func:`distortion_to_file_order`.

Integer pixel coordinates address pixel centers.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from . import _backend
from .errors import InvalidParameters, NonConvergent, OutsideValidRadius
from .geometry import Pose

__all__ = [
    "INTRINSIC_NAMES",
    "Z_MIN",
    "CameraIntrinsics",
    "PixelPoint",
    "ProjectionResult",
    "distort",
    "project",
    "project_points",
    "unproject",
    "unproject_pixels",
    "undistort_normalized",
    "max_valid_radius",
    "max_valid_distorted_radius",
    "image_corner_radius",
    "distortion_from_file_order",
    "distortion_to_file_order",
]

INTRINSIC_NAMES = ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "t1", "t2")

#: front-plane clip in meters
Z_MIN = 1e-6
UNDISTORT_MAX_ITER = 50
UNDISTORT_TOL = 1e-10
RMAX_SEARCH_LIMIT = 4.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    t1: float = 0.0
    t2: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("width", "height"):
                object.__setattr__(self, f.name, int(v))
            else:
                object.__setattr__(self, f.name, float(v))
        problems = self.violations()
        if problems:
            raise InvalidParameters("invalid intrinsics: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        vals = [getattr(self, n) for n in INTRINSIC_NAMES]
        if not all(math.isfinite(v) for v in vals):
            out.append("non-finite parameter")
        if self.width <= 0 or self.height <= 0:
            out.append("image size must be positive")
        if not self.fx > 0 or not self.fy > 0:
            out.append("focal lengths must be positive")
        if not 0 <= self.cx < self.width:
            out.append(f"cx={self.cx} outside [0, {self.width})")
        if not 0 <= self.cy < self.height:
            out.append(f"cy={self.cy} outside [0, {self.height})")
        return out

    @property
    def distortion(self) -> tuple[float, float, float, float, float]:
        return (self.k1, self.k2, self.k3, self.t1, self.t2)

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in INTRINSIC_NAMES], dtype=float)

    def with_vector(self, v) -> "CameraIntrinsics":
        return replace(self, **{n: float(x) for n, x in zip(INTRINSIC_NAMES, v)})

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def is_valid_vector(self, v) -> bool:
        try:
            self.with_vector(v)
        except InvalidParameters:
            return False
        return True


class PixelPoint(NamedTuple):
    u: float
    v: float


class ProjectionResult(NamedTuple):
    pixel: PixelPoint
    in_front: bool
    within_valid_radius: bool
    inside_image: bool


def distortion_from_file_order(d) -> tuple[float, float, float, float, float]:
    """``(k1, k2, t1, t2, k3)`` -> internal ``(k1, k2, k3, t1, t2)``."""
    k1, k2, t1, t2, k3 = (float(v) for v in d)
    return (k1, k2, k3, t1, t2)


def distortion_to_file_order(d) -> tuple[float, float, float, float, float]:
    k1, k2, k3, t1, t2 = (float(v) for v in d)
    return (k1, k2, t1, t2, k3)


def distort(x, y, coeffs):
    """Apply radial-tangential distortion to normalized coordinates.

    ``coeffs`` is ``(k1, k2, k3, t1, t2)``. Works on scalars and arrays.
    """
    k1, k2, k3, t1, t2 = coeffs
    r2 = x * x + y * y
    f = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
    xd = x * f + 2.0 * t1 * x * y + t2 * (r2 + 2.0 * x * x)
    yd = y * f + 2.0 * t2 * x * y + t1 * (r2 + 2.0 * y * y)
    return xd, yd


def _radial_derivative(r, coeffs):
    k1, k2, k3 = coeffs[:3]
    r2 = r * r
    return 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2 + 7.0 * k3 * r2 * r2 * r2


def max_valid_radius(coeffs) -> float:
    """Largest normalized radius on which ``r * f(r)`` is strictly increasing.

    Only the radial coefficients matter. Returns ``math.inf`` when the map is
    monotone over the whole search range ``[0, 4]``.
    """
    return _max_valid_radius(tuple(float(c) for c in tuple(coeffs)[:3]))


@functools.lru_cache(maxsize=1024)
def _max_valid_radius(k: tuple[float, float, float]) -> float:
    def g(r):
        return _radial_derivative(r, k)

    # coarse grid plus both sides of every real root of the derivative (a
    # cubic in r^2), so dips narrower than the grid spacing are not missed
    probes = [np.linspace(0.0, RMAX_SEARCH_LIMIT, 4097)]
    if any(k):
        poly = np.array([7.0 * k[2], 5.0 * k[1], 3.0 * k[0], 1.0])
        # negligible leading terms make the companion matrix overflow
        lead = np.nonzero(np.abs(poly) > 1e-14 * np.abs(poly).max())[0][0]
        with np.errstate(all="ignore"):
            roots = np.roots(poly[lead:])
        for z in roots:
            if np.isfinite(z) and abs(z.imag) <= 1e-9 * max(1.0, abs(z)) and 0.0 < z.real <= 16.0:
                r = math.sqrt(z.real)
                probes.append(np.array([r * (1 - 1e-9), r, r * (1 + 1e-9)]))
    r = np.unique(np.clip(np.concatenate(probes), 0.0, RMAX_SEARCH_LIMIT))
    bad = np.nonzero(g(r) <= 0.0)[0]
    if not bad.size:
        return math.inf
    lo, hi = float(r[bad[0] - 1]), float(r[bad[0]])
    # invariant: g(lo) > 0 >= g(hi)
    while hi - lo > 1e-14 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def max_valid_distorted_radius(coeffs) -> float:
    """Radial image ``r_max * f(r_max)`` of the valid radius (``inf`` if unbounded)."""
    r = max_valid_radius(coeffs)
    if math.isinf(r):
        return math.inf
    k1, k2, k3 = tuple(coeffs)[:3]
    r2 = r * r
    return r * (1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2)


def _pose_arrays(T: Pose):
    return np.ascontiguousarray(T.rotation.to_matrix()), np.ascontiguousarray(T.t)


def project_points(points, K: CameraIntrinsics, T: Pose | None = None):
    """Vectorized projection of LiDAR-frame points.

    Returns ``(uv, in_front, within_valid_radius)``; ``uv`` rows are NaN for
    points with ``Z_c <= Z_MIN``.
    """
    T = T or Pose.identity()
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
    R, t = _pose_arrays(T)
    uv, xy, zc = _backend.kernels.project_batch(pts, K.as_vector(), R, t, Z_MIN)
    front = zc > Z_MIN
    r = np.hypot(xy[:, 0], xy[:, 1])
    rmax = max_valid_radius(K.distortion)
    within = front & (r <= rmax)
    return uv, front, within


def project(X, K: CameraIntrinsics, T: Pose | None = None) -> ProjectionResult:
    uv, front, within = project_points(np.asarray(X, dtype=float).reshape(1, 3), K, T)
    u, v = float(uv[0, 0]), float(uv[0, 1])
    inside = bool(front[0]) and 0.0 <= u < K.width and 0.0 <= v < K.height
    return ProjectionResult(PixelPoint(u, v), bool(front[0]), bool(within[0]), inside)


def undistort_normalized(xd, yd, coeffs, max_iter=UNDISTORT_MAX_ITER, tol=UNDISTORT_TOL):
    """Invert :func:`distort` pointwise. Returns ``(x, y, ok)`` arrays.

    ``ok`` is False where the iteration did not converge or the solution
    falls outside the valid radius.
    """
    xd = np.atleast_1d(np.asarray(xd, dtype=float))
    yd = np.atleast_1d(np.asarray(yd, dtype=float))
    c = tuple(float(v) for v in coeffs)
    x, y, ok = _backend.kernels.undistort_batch(xd, yd, c, int(max_iter), float(tol))
    rmax = max_valid_radius(c)
    ok = ok & (np.hypot(x, y) <= rmax)
    return x, y, ok


def unproject_pixels(uv, K: CameraIntrinsics):
    """Unit rays for an ``(N, 2)`` pixel array. Returns ``(rays, valid)``."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    xd = (uv[:, 0] - K.cx) / K.fx
    yd = (uv[:, 1] - K.cy) / K.fy
    x, y, ok = undistort_normalized(xd, yd, K.distortion)
    rays = np.stack([x, y, np.ones_like(x)], axis=1)
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return rays, ok


def unproject(p, K: CameraIntrinsics) -> np.ndarray:
    """Unit-norm viewing ray through pixel ``p``.

    Raises :class:`OutsideValidRadius` when the pixel lies beyond the
    monotone region of the lens, :class:`NonConvergent` when undistortion
    fails to converge.
    """
    u, v = float(p[0]), float(p[1])
    xd = (u - K.cx) / K.fx
    yd = (v - K.cy) / K.fy
    coeffs = K.distortion
    if math.hypot(xd, yd) > max_valid_distorted_radius(coeffs):
        raise OutsideValidRadius(f"pixel ({u}, {v}) lies beyond the valid distortion radius")
    x, y, conv = _backend.kernels.undistort_batch(
        np.array([xd]), np.array([yd]), coeffs, UNDISTORT_MAX_ITER, UNDISTORT_TOL
    )
    if not conv[0]:
        raise NonConvergent(f"undistortion of pixel ({u}, {v}) did not converge")
    if math.hypot(x[0], y[0]) > max_valid_radius(coeffs):
        raise OutsideValidRadius(f"pixel ({u}, {v}) undistorts beyond the valid radius")
    ray = np.array([x[0], y[0], 1.0])
    return ray / np.linalg.norm(ray)


def image_corner_radius(K: CameraIntrinsics) -> float:
    """Largest undistorted normalized radius among the four image corners.

    Returns ``inf`` when any corner cannot be undistorted within the valid radius.
    """
    corners = np.array([[0.0, 0.0], [K.width - 1.0, 0.0], [0.0, K.height - 1.0], [K.width - 1.0, K.height - 1.0]])
    xd = (corners[:, 0] - K.cx) / K.fx
    yd = (corners[:, 1] - K.cy) / K.fy
    x, y, conv = _backend.kernels.undistort_batch(xd, yd, K.distortion, UNDISTORT_MAX_ITER, UNDISTORT_TOL)
    if not conv.all():
        return math.inf
    return float(np.max(np.hypot(x, y)))
