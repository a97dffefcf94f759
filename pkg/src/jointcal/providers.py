"""Correspondence providers and the intrinsic/extrinsic perturbation sampler.

A provider is any callable taking a :class:`ProviderRequest` and returning a
:class:`ProviderBatch`. :class:`SyntheticProvider` stands in for a learned
pixel-point matcher: it projects a known scene with the true parameters and
corrupts the pixels with a per-iteration noise level plus gross outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .camera import CameraIntrinsics, image_corner_radius, max_valid_radius, project_points, unproject_pixels
from .errors import EmptyFrustum, InvalidParameters, RejectionBudgetExceeded
from .geometry import Pose, apply_pose, compose, inverse, quat_exp
from .residuals import CorrespondenceSet, ParamBlock

DEFAULT_SIGMAS = (8.0, 5.0, 3.0, 2.0, 1.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
MAX_REJECTIONS = 10_000
TANGENTIAL_LIMIT = 0.01


@dataclass(frozen=True)
class NoiseSchedule:
    per_iteration_pixel_sigma: tuple[float, ...] = DEFAULT_SIGMAS
    outlier_fraction: float = 0.05
    outlier_spread: float = 50.0

    def __post_init__(self):
        sig = tuple(float(s) for s in self.per_iteration_pixel_sigma)
        object.__setattr__(self, "per_iteration_pixel_sigma", sig)
        if any(s < 0 or not math.isfinite(s) for s in sig):
            raise ValueError("noise sigmas must be finite and nonnegative")
        if any(b > a for a, b in zip(sig, sig[1:])):
            raise ValueError("noise sigmas must be non-increasing")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1]")
        if self.outlier_spread < 0:
            raise ValueError("outlier_spread must be nonnegative")

    def sigma(self, iteration: int) -> float:
        return self.per_iteration_pixel_sigma[iteration]

    @classmethod
    def noise_free(cls, n: int = len(DEFAULT_SIGMAS)) -> "NoiseSchedule":
        return cls((0.0,) * n, 0.0, 0.0)


@dataclass(frozen=True)
class PerturbationRanges:
    """Uniform half-widths. Focal lengths and principal point are relative
    (0.1 means +-10%); distortion is additive; rotation in degrees and
    translation in meters.

    With ``extrinsic_mode="fixed"`` the rotation and translation offsets have
    exactly the given magnitude in a uniformly random direction.
    """

    fx: float = 0.0
    fy: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    t1: float = 0.0
    t2: float = 0.0
    rotation_deg: float = 0.0
    translation_m: float = 0.0
    extrinsic_mode: str = "uniform"

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "t1", "t2", "rotation_deg", "translation_m"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"half-width {name} must be finite and >= 0")
        if self.extrinsic_mode not in ("uniform", "fixed"):
            raise ValueError("extrinsic_mode must be 'uniform' or 'fixed'")

    @classmethod
    def relative(cls, intrinsics: CameraIntrinsics, fraction: float, rotation_deg: float = 0.0,
                 translation_m: float = 0.0, extrinsic_mode: str = "uniform") -> "PerturbationRanges":
        """+-``fraction`` on every intrinsic, distortion included (as additive
        half-widths of ``fraction * |coefficient|``)."""
        k = intrinsics
        return cls(fraction, fraction, fraction, fraction,
                   fraction * abs(k.k1), fraction * abs(k.k2), fraction * abs(k.k3),
                   fraction * abs(k.t1), fraction * abs(k.t2),
                   rotation_deg, translation_m, extrinsic_mode)

    def intrinsics_zero(self) -> bool:
        return not any((self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.t1, self.t2))


def distortion_is_plausible(coeffs, reference) -> bool:
    """Sign- and scale-consistency of a sampled distortion vector.

    ``coeffs`` and ``reference`` are ``(k1, k2, k3, t1, t2)``.
    """
    k1, k2, k3, t1, t2 = coeffs
    if reference[0] != 0.0 and np.sign(k1) != np.sign(reference[0]):
        return False
    return abs(k2) <= abs(k1) and abs(k3) <= abs(k2) and abs(t1) <= TANGENTIAL_LIMIT and abs(t2) <= TANGENTIAL_LIMIT


def model_is_usable(K: CameraIntrinsics) -> bool:
    """Whole image lies inside the monotone region of the lens model."""
    return image_corner_radius(K) <= max_valid_radius(K.distortion)


def _random_unit(rng) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def perturb_pose(pose: Pose, rotation_deg: float, translation_m: float, rng, mode: str = "uniform") -> Pose:
    """Left-multiply ``pose`` by a random rigid offset."""
    axis = _random_unit(rng)
    if mode == "fixed":
        angle = math.radians(rotation_deg)
        dt = _random_unit(rng) * translation_m
    else:
        angle = math.radians(rng.uniform(-rotation_deg, rotation_deg))
        dt = rng.uniform(-translation_m, translation_m, size=3)
    offset = Pose(quat_exp(axis * angle), tuple(dt))
    return compose(offset, pose)


def sample_perturbed_params(true_params: ParamBlock, ranges: PerturbationRanges, rng_seed) -> ParamBlock:
    """Draw a perturbed parameter block.

    Raises :class:`RejectionBudgetExceeded` if no plausible intrinsics are
    found within ``MAX_REJECTIONS`` draws.
    """
    rng = np.random.default_rng(rng_seed)
    K = true_params.intrinsics
    intr = K
    if not ranges.intrinsics_zero():
        base = K.as_vector()
        rel = np.array([ranges.fx, ranges.fy, ranges.cx, ranges.cy])
        add = np.array([ranges.k1, ranges.k2, ranges.k3, ranges.t1, ranges.t2])
        for _ in range(MAX_REJECTIONS):
            v = base.copy()
            v[:4] = base[:4] * (1.0 + rng.uniform(-rel, rel))
            v[4:] = base[4:] + rng.uniform(-add, add)
            if not distortion_is_plausible(v[4:], K.distortion):
                continue
            try:
                cand = K.with_vector(v)
            except InvalidParameters:
                continue
            if model_is_usable(cand):
                intr = cand
                break
        else:
            raise RejectionBudgetExceeded(f"no plausible intrinsics after {MAX_REJECTIONS} draws")
    pose = true_params.extrinsics
    if ranges.rotation_deg > 0 or ranges.translation_m > 0:
        pose = perturb_pose(pose, ranges.rotation_deg, ranges.translation_m, rng, ranges.extrinsic_mode)
    return ParamBlock(intr, pose, true_params.frozen_intrinsics)


@dataclass
class Scene:
    """LiDAR-frame points with the frame each was observed in."""

    points: np.ndarray
    frame_ids: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def make_scene(truth: ParamBlock, n_frames: int = 10, points_per_frame: int = 60,
               depth_range: tuple[float, float] = (2.0, 50.0), row_band: tuple[float, float] = (0.0, 1.0),
               seed=0) -> Scene:
    """Random points that the true camera sees, expressed in the LiDAR frame.

    Pixels are drawn uniformly over the image rows in ``row_band`` (fractions
    of the height) and lifted to a log-uniform depth.
    """
    rng = np.random.default_rng(seed)
    K = truth.intrinsics
    to_lidar = inverse(truth.extrinsics)
    R, t = to_lidar.rotation.to_matrix(), to_lidar.t
    lo, hi = np.log(depth_range[0]), np.log(depth_range[1])
    pts, ids = [], []
    for f in range(n_frames):
        got = 0
        while got < points_per_frame:
            m = points_per_frame - got
            uv = np.column_stack([
                rng.uniform(0.0, K.width - 1.0, m),
                rng.uniform(row_band[0] * (K.height - 1.0), row_band[1] * (K.height - 1.0), m),
            ])
            rays, ok = unproject_pixels(uv, K)
            rays = rays[ok]
            depth = np.exp(rng.uniform(lo, hi, rays.shape[0]))
            pc = rays / rays[:, 2:3] * depth[:, None]
            pts.append(pc @ R.T + t)
            ids.extend([str(f)] * pc.shape[0])
            got += pc.shape[0]
    return Scene(np.vstack(pts), np.array(ids, dtype=object))


def synthetic_correspondences(scene: Scene, true_params: ParamBlock, schedule: NoiseSchedule,
                              iteration: int, rng_seed) -> tuple[CorrespondenceSet, dict]:
    """Noisy correspondences for one refinement iteration.

    Returns the batch and its provenance metadata.
    """
    K = true_params.intrinsics
    uv, front, _ = project_points(scene.points, K, true_params.extrinsics)
    with np.errstate(invalid="ignore"):
        keep = front & (uv[:, 0] >= 0) & (uv[:, 0] < K.width) & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)
    if not keep.any():
        raise EmptyFrustum("no scene point projects inside the image")
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), int(iteration)]))
    pts = scene.points[keep]
    true_uv = uv[keep]
    n = pts.shape[0]
    sigma = schedule.sigma(iteration)
    noisy = true_uv + rng.normal(0.0, 1.0, size=(n, 2)) * sigma
    n_out = int(round(schedule.outlier_fraction * n))
    if n_out:
        idx = rng.choice(n, size=n_out, replace=False)
        noisy[idx] = true_uv[idx] + rng.uniform(-schedule.outlier_spread, schedule.outlier_spread, size=(n_out, 2))
    cs = CorrespondenceSet(pts, noisy, np.ones(n), scene.frame_ids[keep])
    meta = {
        "source": "synthetic",
        "iteration": int(iteration),
        "sigma_px": sigma,
        "outlier_fraction": schedule.outlier_fraction,
        "outliers": n_out,
        "dropped": int(np.count_nonzero(~keep)),
        "seed": int(rng_seed),
    }
    return cs, meta


@dataclass(frozen=True)
class ProviderRequest:
    iteration_index: int
    current_params: ParamBlock
    frame_ids: tuple = ()


@dataclass
class ProviderBatch:
    correspondences: CorrespondenceSet
    metadata: dict = field(default_factory=dict)


class CorrespondenceProvider(Protocol):
    def __call__(self, request: ProviderRequest) -> ProviderBatch: ...


class SyntheticProvider:
    """Oracle matcher over a known scene with a coarse-to-fine noise schedule."""

    def __init__(self, scene: Scene, truth: ParamBlock, schedule: NoiseSchedule | None = None, seed: int = 0):
        self.scene = scene
        self.truth = truth
        self.schedule = schedule or NoiseSchedule()
        self.seed = seed

    def __call__(self, request: ProviderRequest) -> ProviderBatch:
        scene = self.scene
        if request.frame_ids:
            sel = np.isin(scene.frame_ids, [str(f) for f in request.frame_ids])
            scene = Scene(scene.points[sel], scene.frame_ids[sel])
        cs, meta = synthetic_correspondences(scene, self.truth, self.schedule, request.iteration_index, self.seed)
        return ProviderBatch(cs, meta)


class StaticProvider:
    """Serves pre-computed batches, e.g. matcher outputs loaded from disk.

    ``batches`` holds one set per iteration; with a single set it is reused.
    """

    def __init__(self, batches: Sequence[CorrespondenceSet], label: str = "static"):
        if not batches:
            raise ValueError("need at least one correspondence batch")
        self.batches = list(batches)
        self.label = label

    def __call__(self, request: ProviderRequest) -> ProviderBatch:
        i = min(request.iteration_index, len(self.batches) - 1)
        return ProviderBatch(self.batches[i], {"source": self.label, "batch": i})


def callable_provider(fn: Callable[[ProviderRequest], CorrespondenceSet]) -> CorrespondenceProvider:
    def wrapped(request):
        return ProviderBatch(fn(request), {"source": getattr(fn, "__name__", "callable")})
    return wrapped
