"""Independent reference computations used by the test-suite.

Nothing here calls the package's projection or Jacobian kernels.
"""

import numpy as np

LD = np.longdouble


def _qmul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def _qexp(d):
    th = np.sqrt(np.sum(d * d, axis=0))
    safe = np.where(th > 0, th, LD(1))
    s = np.where(th > 0, np.sin(th / 2) / safe, LD(0.5))
    return np.stack([np.cos(th / 2), d[0] * s, d[1] * s, d[2] * s])


def _rotate(q, v):
    u = q[1:]
    c = np.cross(u, v, axis=0)
    return v + 2 * q[0] * c + 2 * np.cross(u, c, axis=0)


def residual_model(theta, q0, X, obs):
    """Residual ``obs - pixel`` for column-stacked configurations.

    ``theta`` is (15, N): intrinsics, tangent rotation increment, translation.
    """
    fx, fy, cx, cy, k1, k2, k3, t1, t2 = theta[:9]
    q = _qmul(q0, _qexp(theta[9:12]))
    pc = _rotate(q, X) + theta[12:15]
    x = pc[0] / pc[2]
    y = pc[1] / pc[2]
    r2 = x * x + y * y
    f = 1 + k1 * r2 + k2 * r2**2 + k3 * r2**3
    xd = x * f + 2 * t1 * x * y + t2 * (r2 + 2 * x * x)
    yd = y * f + 2 * t2 * x * y + t1 * (r2 + 2 * y * y)
    return np.stack([obs[0] - (fx * xd + cx), obs[1] - (fy * yd + cy)])


def central_difference_jacobians(intrinsics, quats, translations, points, pixels, rel_step=1e-6):
    """(N, 2, 15) central-difference Jacobians in extended precision.

    Step for parameter ``p`` is ``rel_step * max(|p|, 1)``.
    """
    n = len(points)
    theta = np.concatenate([np.asarray(intrinsics, dtype=LD).T, np.zeros((3, n), dtype=LD),
                            np.asarray(translations, dtype=LD).T])
    q0 = np.asarray(quats, dtype=LD).T
    X = np.asarray(points, dtype=LD).T
    obs = np.asarray(pixels, dtype=LD).T
    out = np.zeros((n, 2, 15))
    for j in range(15):
        h = LD(rel_step) * np.maximum(np.abs(theta[j]), LD(1))
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        d = (residual_model(tp, q0, X, obs) - residual_model(tm, q0, X, obs)) / (2 * h)
        out[:, :, j] = np.asarray(d, dtype=float).T
    return out


def jacobian_relative_error(analytic, reference, floor=1e-6):
    """Entrywise relative error; entries below ``floor`` times the largest
    magnitude in their residual row are measured against that floor."""
    scale = np.maximum(np.abs(analytic), np.abs(reference))
    row = np.max(np.abs(reference), axis=-1, keepdims=True)
    return np.abs(analytic - reference) / np.maximum(scale, floor * row)


def brute_force_median_reprojection(est, truth, n=1000):
    """Median ray-reprojection error over an n x n grid of pixel centers.

    Undistortion by plain fixed-point iteration, projection by direct formula.
    """
    u = (np.arange(n) + 0.5) * truth.width / n
    v = (np.arange(n) + 0.5) * truth.height / n
    uu, vv = np.meshgrid(u, v)
    xd = (uu.ravel() - truth.cx) / truth.fx
    yd = (vv.ravel() - truth.cy) / truth.fy
    k1, k2, k3, t1, t2 = truth.k1, truth.k2, truth.k3, truth.t1, truth.t2
    x, y = xd.copy(), yd.copy()
    for _ in range(200):
        r2 = x * x + y * y
        f = 1 + k1 * r2 + k2 * r2**2 + k3 * r2**3
        xn = (xd - 2 * t1 * x * y - t2 * (r2 + 2 * x * x)) / f
        yn = (yd - 2 * t2 * x * y - t1 * (r2 + 2 * y * y)) / f
        done = max(np.abs(xn - x).max(), np.abs(yn - y).max()) < 1e-15
        x, y = xn, yn
        if done:
            break

    def proj(K):
        r2 = x * x + y * y
        f = 1 + K.k1 * r2 + K.k2 * r2**2 + K.k3 * r2**3
        xdd = x * f + 2 * K.t1 * x * y + K.t2 * (r2 + 2 * x * x)
        ydd = y * f + 2 * K.t2 * x * y + K.t1 * (r2 + 2 * y * y)
        return K.fx * xdd + K.cx, K.fy * ydd + K.cy

    ue, ve = proj(est)
    ut, vt = proj(truth)
    return float(np.median(np.hypot(ue - ut, ve - vt)))
