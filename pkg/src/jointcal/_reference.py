"""Pure-numpy kernels. Same signatures as the compiled ``_kernels`` module.

Intrinsic vectors are ordered ``[fx, fy, cx, cy, k1, k2, k3, t1, t2]``.
Jacobian columns are ``[fx, fy, cx, cy, k1, k2, k3, t1, t2, rot(3), trans(3)]``
with the rotation block in the body-frame tangent space of the pose.
"""

import numpy as np

NAME = "python"


def _distort(x, y, k1, k2, k3, t1, t2):
    xx = x * x
    yy = y * y
    xy = x * y
    r2 = xx + yy
    f = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * f + 2.0 * t1 * xy + t2 * (r2 + 2.0 * xx)
    yd = y * f + 2.0 * t2 * xy + t1 * (r2 + 2.0 * yy)
    return xd, yd


def project_batch(points, intr, R, t, z_min):
    """Project LiDAR-frame points. Returns ``(uv, xy, zc)``.

    Rows with ``zc <= z_min`` carry NaN in ``uv`` and ``xy``.
    """
    fx, fy, cx, cy, k1, k2, k3, t1, t2 = intr
    pc = points @ R.T + t
    zc = pc[:, 2]
    front = zc > z_min
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(front, pc[:, 0] / zc, np.nan)
        y = np.where(front, pc[:, 1] / zc, np.nan)
    xd, yd = _distort(x, y, k1, k2, k3, t1, t2)
    uv = np.stack([fx * xd + cx, fy * yd + cy], axis=1)
    return uv, np.stack([x, y], axis=1), zc


def undistort_batch(xd, yd, coeffs, max_iter, tol):
    """Invert the distortion map by Newton iteration with a fixed-point fallback.

    Returns ``(x, y, converged)``.
    """
    k1, k2, k3, t1, t2 = coeffs
    xd = np.asarray(xd, dtype=float)
    yd = np.asarray(yd, dtype=float)
    x = xd.copy()
    y = yd.copy()
    done = np.zeros(xd.shape, dtype=bool)
    for _ in range(max_iter):
        ex, ey = _distort(x, y, k1, k2, k3, t1, t2)
        ex = ex - xd
        ey = ey - yd
        done = np.maximum(np.abs(ex), np.abs(ey)) <= tol
        if done.all():
            break
        a, b, c, d = _distortion_jacobian(x, y, k1, k2, k3, t1, t2)
        det = a * d - b * c
        ok = np.abs(det) > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - (d * ex - b * ey) / det
            ny = y - (-c * ex + a * ey) / det
        ok &= np.isfinite(nx) & np.isfinite(ny)
        # fixed-point step where Newton is unusable
        xx, yy = x * x, y * y
        r2 = xx + yy
        f = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        with np.errstate(divide="ignore", invalid="ignore"):
            fpx = (xd - 2.0 * t1 * x * y - t2 * (r2 + 2.0 * xx)) / f
            fpy = (yd - 2.0 * t2 * x * y - t1 * (r2 + 2.0 * yy)) / f
        x = np.where(done, x, np.where(ok, nx, fpx))
        y = np.where(done, y, np.where(ok, ny, fpy))
    else:
        ex, ey = _distort(x, y, k1, k2, k3, t1, t2)
        done = np.maximum(np.abs(ex - xd), np.abs(ey - yd)) <= tol
    # one polishing Newton step on converged entries
    ex, ey = _distort(x, y, k1, k2, k3, t1, t2)
    ex = ex - xd
    ey = ey - yd
    a, b, c, d = _distortion_jacobian(x, y, k1, k2, k3, t1, t2)
    det = a * d - b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        nx = x - (d * ex - b * ey) / det
        ny = y - (-c * ex + a * ey) / det
    polish = done & np.isfinite(nx) & np.isfinite(ny)
    x = np.where(polish, nx, x)
    y = np.where(polish, ny, y)
    done &= np.isfinite(x) & np.isfinite(y)
    return x, y, done


def _distortion_jacobian(x, y, k1, k2, k3, t1, t2):
    """Partials of (xd, yd) w.r.t. (x, y) as ``(dxd/dx, dxd/dy, dyd/dx, dyd/dy)``."""
    xx, yy, xy = x * x, y * y, x * y
    r2 = xx + yy
    f = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    fp = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
    a = f + 2.0 * xx * fp + 2.0 * t1 * y + 6.0 * t2 * x
    b = 2.0 * xy * fp + 2.0 * t1 * x + 2.0 * t2 * y
    c = 2.0 * xy * fp + 2.0 * t2 * y + 2.0 * t1 * x
    d = f + 2.0 * yy * fp + 2.0 * t2 * x + 6.0 * t1 * y
    return a, b, c, d


def residuals_and_jacobian(points, pixels, weights, intr, R, t, z_min):
    """Weighted residuals ``sqrt(w) * (obs - proj)`` and their 2x15 Jacobians.

    Returns ``(res (N,2), jac (N,2,15), front (N,))``. Rows behind the
    camera are zero-filled and flagged ``front=False``.
    """
    fx, fy, cx, cy, k1, k2, k3, t1, t2 = intr
    n = points.shape[0]
    pc = points @ R.T + t
    zc = pc[:, 2]
    front = zc > z_min
    iz = np.where(front, 1.0 / np.where(front, zc, 1.0), 0.0)
    x = pc[:, 0] * iz
    y = pc[:, 1] * iz
    xx, yy, xy = x * x, y * y, x * y
    r2 = xx + yy
    r4 = r2 * r2
    r6 = r4 * r2
    f = 1.0 + k1 * r2 + k2 * r4 + k3 * r6
    xd = x * f + 2.0 * t1 * xy + t2 * (r2 + 2.0 * xx)
    yd = y * f + 2.0 * t2 * xy + t1 * (r2 + 2.0 * yy)
    u = fx * xd + cx
    v = fy * yd + cy

    sw = np.sqrt(weights)
    res = np.empty((n, 2))
    res[:, 0] = sw * (pixels[:, 0] - u)
    res[:, 1] = sw * (pixels[:, 1] - v)

    # d(pixel)/d(params), negated at the end
    J = np.zeros((n, 2, 15))
    J[:, 0, 0] = xd
    J[:, 1, 1] = yd
    J[:, 0, 2] = 1.0
    J[:, 1, 3] = 1.0
    J[:, 0, 4] = fx * x * r2
    J[:, 0, 5] = fx * x * r4
    J[:, 0, 6] = fx * x * r6
    J[:, 0, 7] = fx * 2.0 * xy
    J[:, 0, 8] = fx * (r2 + 2.0 * xx)
    J[:, 1, 4] = fy * y * r2
    J[:, 1, 5] = fy * y * r4
    J[:, 1, 6] = fy * y * r6
    J[:, 1, 7] = fy * (r2 + 2.0 * yy)
    J[:, 1, 8] = fy * 2.0 * xy

    a, b, c, d = _distortion_jacobian(x, y, k1, k2, k3, t1, t2)
    # d(u,v)/d(x,y)
    duv_dxy = np.empty((n, 2, 2))
    duv_dxy[:, 0, 0] = fx * a
    duv_dxy[:, 0, 1] = fx * b
    duv_dxy[:, 1, 0] = fy * c
    duv_dxy[:, 1, 1] = fy * d
    # d(x,y)/d(pc)
    dxy_dpc = np.zeros((n, 2, 3))
    dxy_dpc[:, 0, 0] = iz
    dxy_dpc[:, 0, 2] = -x * iz
    dxy_dpc[:, 1, 1] = iz
    dxy_dpc[:, 1, 2] = -y * iz
    duv_dpc = np.einsum("nij,njk->nik", duv_dxy, dxy_dpc)
    # d(pc)/d(delta) = -R [X]x
    X = points
    sk = np.zeros((n, 3, 3))
    sk[:, 0, 1] = -X[:, 2]
    sk[:, 0, 2] = X[:, 1]
    sk[:, 1, 0] = X[:, 2]
    sk[:, 1, 2] = -X[:, 0]
    sk[:, 2, 0] = -X[:, 1]
    sk[:, 2, 1] = X[:, 0]
    dpc_drot = -np.einsum("ij,njk->nik", R, sk)
    J[:, :, 9:12] = np.einsum("nij,njk->nik", duv_dpc, dpc_drot)
    J[:, :, 12:15] = duv_dpc

    J *= -sw[:, None, None]
    res[~front] = 0.0
    J[~front] = 0.0
    return res, J, front


def cauchy(s, c):
    """Cauchy loss ``c^2 log(1 + s/c^2)`` and its first two derivatives."""
    c2 = c * c
    inv = 1.0 / (1.0 + s / c2)
    return c2 * np.log1p(s / c2), inv, -inv * inv / c2


def accumulate_normal_equations(points, pixels, weights, intr, R, t, loss_scale, z_min):
    """Robustified Gauss-Newton system for the reprojection term.

    Returns ``(H, g, cost, n_used, n_excluded)`` with ``H = J'^T J'`` and
    ``g = J'^T r'`` of the corrected residuals; ``cost`` is the sum of the
    robust loss over squared residual norms.
    """
    res, J, front = residuals_and_jacobian(points, pixels, weights, intr, R, t, z_min)
    s = res[:, 0] ** 2 + res[:, 1] ** 2
    if loss_scale > 0.0:
        rho, rho1, rho2 = cauchy(s, loss_scale)
    else:
        rho, rho1, rho2 = s, np.ones_like(s), np.zeros_like(s)
    sqrt_rho1 = np.sqrt(rho1)
    # second-order correction only where rho'' > 0, else plain IRLS scaling
    use_corr = (s > 0.0) & (rho2 > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 1.0 + 2.0 * s * rho2 / rho1
        alpha = np.where(use_corr, 1.0 - np.sqrt(np.maximum(D, 0.0)), 0.0)
        rscale = np.where(use_corr, sqrt_rho1 / (1.0 - alpha), sqrt_rho1)
        acoef = np.where(use_corr, alpha / s, 0.0)
    rr = rscale[:, None] * res
    # J' = sqrt(rho1) * (I - alpha r r^T / s) J
    proj = np.einsum("ni,nik->nk", res, J)
    Jc = sqrt_rho1[:, None, None] * (J - acoef[:, None, None] * res[:, :, None] * proj[:, None, :])
    Jc[~front] = 0.0
    rr[~front] = 0.0
    Jf = Jc.reshape(-1, 15)
    H = Jf.T @ Jf
    g = Jf.T @ rr.reshape(-1)
    cost = float(np.sum(np.where(front, rho, 0.0)))
    n_used = int(np.count_nonzero(front & (weights > 0)))
    n_excl = int(np.count_nonzero(~front))
    return H, g, cost, n_used, n_excl


def robust_cost(points, pixels, weights, intr, R, t, loss_scale, z_min):
    """Sum of robust losses and the number of points behind the camera."""
    uv, _, zc = project_batch(points, intr, R, t, z_min)
    front = zc > z_min
    sw = np.sqrt(weights)
    du = sw * (pixels[:, 0] - uv[:, 0])
    dv = sw * (pixels[:, 1] - uv[:, 1])
    s = du * du + dv * dv
    s = s[front]
    if loss_scale > 0.0:
        c2 = loss_scale * loss_scale
        total = float(np.sum(c2 * np.log1p(s / c2)))
    else:
        total = float(np.sum(s))
    return total, int(np.count_nonzero(~front))
