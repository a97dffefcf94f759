"""Rigid-transform algebra for the LiDAR-to-camera extrinsic.

Conventions (fixed project-wide):

- Quaternions are Hamilton, stored scalar-first as ``(w, x, y, z)``.
- ``R(q)`` rotates a vector expressed in the LiDAR frame into the camera
  frame, so a pose maps ``X_cam = R(q) @ X_lidar + t``.
- Tangent increments are body-frame: ``q_new = q * exp(delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Quaternion",
    "Pose",
    "quat_multiply",
    "quat_exp",
    "quat_from_axis_angle",
    "quat_from_matrix",
    "rotate_point",
    "apply_pose",
    "compose",
    "inverse",
    "local_update",
    "rotation_angle_between",
    "skew",
]


@dataclass(frozen=True)
class Quaternion:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        w, x, y, z = (float(v) for v in a)
        return cls(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if not n > 0.0 or not math.isfinite(n):
            raise ValueError(f"cannot normalize quaternion with norm {n}")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return quat_multiply(self, other)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )


@dataclass(frozen=True)
class Pose:
    """Extrinsic transform taking LiDAR-frame points into the camera frame."""

    rotation: Quaternion = Quaternion()
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3:
            raise ValueError("translation must have 3 components")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Quaternion.identity(), (0.0, 0.0, 0.0))

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation, dtype=float)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.to_matrix()
        m[:3, 3] = self.translation
        return m


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a * b`` (not renormalized)."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def quat_exp(delta) -> Quaternion:
    """Exponential map from a rotation vector (radians) to a unit quaternion."""
    dx, dy, dz = (float(v) for v in delta)
    theta = math.sqrt(dx * dx + dy * dy + dz * dz)
    half = 0.5 * theta
    if theta < 1e-8:
        # second-order Taylor terms of cos(h) and sin(h)/theta
        s = 0.5 - theta * theta / 48.0
        return Quaternion(1.0 - half * half / 2.0, dx * s, dy * s, dz * s)
    s = math.sin(half) / theta
    return Quaternion(math.cos(half), dx * s, dy * s, dz * s)


def quat_from_axis_angle(axis, angle: float) -> Quaternion:
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    return quat_exp(a / n * angle)


def quat_from_matrix(R, tol: float = 1e-6) -> Quaternion:
    """Convert a rotation matrix to a unit quaternion with ``w >= 0``.

    Raises ``ValueError`` if ``R`` is not orthonormal with determinant +1
    within ``tol``.
    """
    R = np.asarray(R, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(R)):
        raise ValueError("rotation matrix has non-finite entries")
    err = np.max(np.abs(R @ R.T - np.eye(3)))
    det = np.linalg.det(R)
    if err > tol or abs(det - 1.0) > tol:
        raise ValueError(f"matrix is not a proper rotation (orthonormality error {err:.3g}, det {det:.6g})")
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    # Shepperd's method: pivot on the largest diagonal term
    if tr > 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = (0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s)
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = ((R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s)
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = ((R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = ((R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s)
    out = Quaternion(*q).normalized()
    return -out if out.w < 0 else out


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotate_point(q: Quaternion, X) -> np.ndarray:
    """Rotate ``X`` by the unit quaternion ``q``."""
    # v' = v + 2w (u x v) + 2 u x (u x v), u the vector part
    v = np.asarray(X, dtype=float)
    u = np.array([q.x, q.y, q.z])
    c = np.cross(u, v)
    return v + 2.0 * q.w * c + 2.0 * np.cross(u, c)


def apply_pose(T: Pose, X) -> np.ndarray:
    return rotate_point(T.rotation, X) + T.t


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a ∘ b``: apply ``b`` first, then ``a``."""
    q = quat_multiply(a.rotation, b.rotation).normalized()
    t = rotate_point(a.rotation, b.t) + a.t
    return Pose(q, tuple(t))


def inverse(p: Pose) -> Pose:
    qi = p.rotation.conjugate()
    return Pose(qi, tuple(-rotate_point(qi, p.t)))


def local_update(q: Quaternion, delta) -> Quaternion:
    """Right-multiply ``q`` by the exponential of the tangent increment ``delta``."""
    return quat_multiply(q, quat_exp(delta)).normalized()


def rotation_angle_between(q1: Quaternion, q2: Quaternion) -> float:
    """Shortest-arc angle in degrees between two orientations, in [0, 180].

    Equal to ``2 * acos(|<q1, q2>|)``; evaluated through ``atan2`` on the
    relative rotation, which keeps full precision for tiny angles.
    """
    rel = quat_multiply(q1.conjugate(), q2)
    s = math.sqrt(rel.x * rel.x + rel.y * rel.y + rel.z * rel.z)
    return math.degrees(2.0 * math.atan2(s, abs(rel.w)))
