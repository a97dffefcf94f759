"""Reprojection residuals, the Cauchy robustifier and analytic Jacobians.

The 15 optimized parameters are ordered::

    [fx, fy, cx, cy, k1, k2, k3, t1, t2, rot_x, rot_y, rot_z, tx, ty, tz]

with the rotation block in the tangent space used by
:func:`jointcal.geometry.local_update`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _reference
from .camera import INTRINSIC_NAMES, Z_MIN, CameraIntrinsics, PixelPoint
from .errors import BehindCamera, InvalidParameters
from .geometry import Pose, local_update

PARAM_NAMES = INTRINSIC_NAMES + ("rot_x", "rot_y", "rot_z", "tx", "ty", "tz")
N_PARAMS = 15
N_INTRINSICS = 9


@dataclass(frozen=True)
class Correspondence:
    point: tuple[float, float, float]
    pixel: PixelPoint
    weight: float = 1.0
    frame_id: str = "0"

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        object.__setattr__(self, "pixel", PixelPoint(float(self.pixel[0]), float(self.pixel[1])))
        object.__setattr__(self, "weight", float(self.weight))
        vals = self.point + tuple(self.pixel) + (self.weight,)
        if not np.all(np.isfinite(vals)):
            raise InvalidParameters("correspondence has non-finite fields")
        if self.weight < 0:
            raise InvalidParameters("correspondence weight must be nonnegative")


@dataclass
class CorrespondenceSet:
    """Struct-of-arrays view over a batch of correspondences."""

    points: np.ndarray
    pixels: np.ndarray
    weights: np.ndarray
    frame_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.asarray(self.points, dtype=float).reshape(-1, 3))
        n = self.points.shape[0]
        self.pixels = np.ascontiguousarray(np.asarray(self.pixels, dtype=float).reshape(n, 2))
        if self.weights is None:
            self.weights = np.ones(n)
        self.weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float).reshape(n))
        if self.frame_ids is None:
            self.frame_ids = np.full(n, "0", dtype=object)
        self.frame_ids = np.asarray(self.frame_ids, dtype=object).reshape(n)
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.pixels)) and np.all(np.isfinite(self.weights))):
            raise InvalidParameters("correspondences contain non-finite values")
        if np.any(self.weights < 0):
            raise InvalidParameters("correspondence weights must be nonnegative")

    def __len__(self):
        return self.points.shape[0]

    @classmethod
    def from_list(cls, items: Iterable[Correspondence]) -> "CorrespondenceSet":
        items = list(items)
        if not items:
            return cls(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=object))
        return cls(
            np.array([c.point for c in items]),
            np.array([tuple(c.pixel) for c in items]),
            np.array([c.weight for c in items]),
            np.array([c.frame_id for c in items], dtype=object),
        )

    def to_list(self) -> list[Correspondence]:
        return [
            Correspondence(tuple(p), PixelPoint(*px), w, str(f))
            for p, px, w, f in zip(self.points, self.pixels, self.weights, self.frame_ids)
        ]

    def shifted(self, du: float, dv: float) -> "CorrespondenceSet":
        return CorrespondenceSet(self.points, self.pixels + [du, dv], self.weights, self.frame_ids)


def as_correspondence_set(c) -> CorrespondenceSet:
    if isinstance(c, CorrespondenceSet):
        return c
    return CorrespondenceSet.from_list(c)


@dataclass(frozen=True)
class ParamBlock:
    intrinsics: CameraIntrinsics
    extrinsics: Pose
    frozen_intrinsics: tuple[bool, ...] = (False,) * N_INTRINSICS

    def __post_init__(self):
        mask = tuple(bool(b) for b in self.frozen_intrinsics)
        if len(mask) != N_INTRINSICS:
            raise ValueError(f"frozen_intrinsics needs {N_INTRINSICS} entries")
        object.__setattr__(self, "frozen_intrinsics", mask)
        n = self.extrinsics.rotation.norm()
        if abs(n - 1.0) > 1e-9:
            raise InvalidParameters(f"pose rotation is not unit-norm (|q| = {n})")

    def free_mask(self, freeze_all_intrinsics: bool = False) -> np.ndarray:
        m = np.ones(N_PARAMS, dtype=bool)
        m[:N_INTRINSICS] = ~np.array(self.frozen_intrinsics)
        if freeze_all_intrinsics:
            m[:N_INTRINSICS] = False
        return m

    def arrays(self):
        """``(intrinsic vector, R, t)`` as contiguous float arrays for the kernels."""
        return (
            np.ascontiguousarray(self.intrinsics.as_vector()),
            np.ascontiguousarray(self.extrinsics.rotation.to_matrix()),
            np.ascontiguousarray(self.extrinsics.t),
        )

    def updated(self, delta: np.ndarray) -> "ParamBlock":
        """Apply a 15-vector increment (raises ``InvalidParameters`` if the
        new intrinsics violate their invariants)."""
        delta = np.asarray(delta, dtype=float)
        kvec = self.intrinsics.as_vector()
        frozen = np.array(self.frozen_intrinsics)
        step_k = np.where(frozen, 0.0, delta[:N_INTRINSICS])
        intr = self.intrinsics if not step_k.any() else self.intrinsics.with_vector(kvec + step_k)
        rot = self.extrinsics.rotation
        if np.any(delta[9:12] != 0.0):
            rot = local_update(rot, delta[9:12])
        t = self.extrinsics.t + delta[12:15]
        return ParamBlock(intr, Pose(rot, tuple(t)), self.frozen_intrinsics)

    def with_frozen(self, mask: Sequence[bool]) -> "ParamBlock":
        return ParamBlock(self.intrinsics, self.extrinsics, tuple(mask))


def cauchy_loss(s, scale: float = 1.0):
    """Cauchy robust loss on a squared residual norm.

    Returns ``(rho, rho', rho'')`` with ``rho(s) = c^2 log(1 + s / c^2)``.
    """
    if np.any(np.asarray(s) < 0):
        raise ValueError("squared residual must be nonnegative")
    return _reference.cauchy(np.asarray(s, dtype=float) if np.ndim(s) else float(s), float(scale))


def _single(c: Correspondence, p: ParamBlock):
    intr, R, t = p.arrays()
    res, J, front = _reference.residuals_and_jacobian(
        np.array([c.point], dtype=float), np.array([tuple(c.pixel)], dtype=float),
        np.array([c.weight]), intr, R, t, Z_MIN,
    )
    if not front[0]:
        raise BehindCamera(f"point {c.point} is behind the camera")
    return res[0], J[0]


def reprojection_residual(c: Correspondence, p: ParamBlock) -> np.ndarray:
    """``sqrt(weight) * (observed - projected)`` in pixels."""
    return _single(c, p)[0]


def residual_jacobian(c: Correspondence, p: ParamBlock) -> np.ndarray:
    """2x15 Jacobian of :func:`reprojection_residual`; frozen columns are zero."""
    J = _single(c, p)[1]
    J[:, :N_INTRINSICS][:, np.array(p.frozen_intrinsics)] = 0.0
    return J


def batch_residuals(cs: CorrespondenceSet, p: ParamBlock):
    """Residuals, Jacobians and in-front mask for a whole batch."""
    intr, R, t = p.arrays()
    res, J, front = _reference.residuals_and_jacobian(cs.points, cs.pixels, cs.weights, intr, R, t, Z_MIN)
    J[:, :, :N_INTRINSICS][:, :, np.array(p.frozen_intrinsics)] = 0.0
    return res, J, front


def principal_point_prior(p: ParamBlock, c0, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("prior sigma must be positive")
    c0 = np.asarray(c0, dtype=float)
    return (p.intrinsics.principal_point - c0) / sigma
