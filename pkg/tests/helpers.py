import numpy as np

from jointcal.camera import unproject_pixels
from jointcal.geometry import apply_pose, inverse
from jointcal.providers import PerturbationRanges, sample_perturbed_params
from jointcal.simulation import kitti_like_truth


def random_configurations(n, seed=0, truth=None):
    """Yield ``(params, point, pixel)`` with params from the perturbation
    sampler and a point in front of the perturbed camera."""
    truth = truth or kitti_like_truth()
    ranges = PerturbationRanges.relative(truth.intrinsics, 0.1, 5.0, 0.2)
    rng = np.random.default_rng(seed)
    for i in range(n):
        p = sample_perturbed_params(truth, ranges, [seed, i])
        K = p.intrinsics
        uv = rng.uniform([0, 0], [K.width - 1, K.height - 1])
        ray, _ = unproject_pixels(uv[None], K)
        Xc = ray[0] / ray[0, 2] * rng.uniform(2.0, 50.0)
        X = apply_pose(inverse(p.extrinsics), Xc)
        yield p, X, uv + rng.normal(scale=3.0, size=2)
