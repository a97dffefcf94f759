# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels mirroring ``jointcal._reference``.

Every loop runs in a fixed order, so results are reproducible bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log1p, fabs, isfinite, NAN

cnp.import_array()

NAME = "cython"


cdef inline void _distort(double x, double y, double k1, double k2, double k3,
                          double t1, double t2, double* xd, double* yd) noexcept nogil:
    cdef double xx = x * x, yy = y * y, xy = x * y
    cdef double r2 = xx + yy
    cdef double f = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd[0] = x * f + 2.0 * t1 * xy + t2 * (r2 + 2.0 * xx)
    yd[0] = y * f + 2.0 * t2 * xy + t1 * (r2 + 2.0 * yy)


cdef inline void _djac(double x, double y, double k1, double k2, double k3,
                       double t1, double t2, double* a, double* b, double* c,
                       double* d) noexcept nogil:
    cdef double xx = x * x, yy = y * y, xy = x * y
    cdef double r2 = xx + yy
    cdef double f = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    cdef double fp = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
    a[0] = f + 2.0 * xx * fp + 2.0 * t1 * y + 6.0 * t2 * x
    b[0] = 2.0 * xy * fp + 2.0 * t1 * x + 2.0 * t2 * y
    c[0] = 2.0 * xy * fp + 2.0 * t2 * y + 2.0 * t1 * x
    d[0] = f + 2.0 * yy * fp + 2.0 * t2 * x + 6.0 * t1 * y


def project_batch(const double[:, ::1] points, const double[::1] intr,
                  const double[:, ::1] R, const double[::1] t, double z_min):
    cdef Py_ssize_t n = points.shape[0], i
    uv_arr = np.empty((n, 2))
    xy_arr = np.empty((n, 2))
    zc_arr = np.empty(n)
    cdef double[:, ::1] uv = uv_arr
    cdef double[:, ::1] xy = xy_arr
    cdef double[::1] zc = zc_arr
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef double k1 = intr[4], k2 = intr[5], k3 = intr[6], t1 = intr[7], t2 = intr[8]
    cdef double X, Y, Z, px, py, pz, x, y, xd, yd
    with nogil:
        for i in range(n):
            X = points[i, 0]; Y = points[i, 1]; Z = points[i, 2]
            px = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + t[0]
            py = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + t[1]
            pz = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + t[2]
            zc[i] = pz
            if pz > z_min:
                x = px / pz
                y = py / pz
                _distort(x, y, k1, k2, k3, t1, t2, &xd, &yd)
                xy[i, 0] = x; xy[i, 1] = y
                uv[i, 0] = fx * xd + cx
                uv[i, 1] = fy * yd + cy
            else:
                xy[i, 0] = NAN; xy[i, 1] = NAN
                uv[i, 0] = NAN; uv[i, 1] = NAN
    return uv_arr, xy_arr, zc_arr


def undistort_batch(xd_in, yd_in, coeffs, int max_iter, double tol):
    cdef const double[::1] xdv = np.ascontiguousarray(xd_in, dtype=np.float64).reshape(-1)
    cdef const double[::1] ydv = np.ascontiguousarray(yd_in, dtype=np.float64).reshape(-1)
    cdef double k1 = coeffs[0], k2 = coeffs[1], k3 = coeffs[2], t1 = coeffs[3], t2 = coeffs[4]
    cdef Py_ssize_t n = xdv.shape[0], i
    cdef int it
    x_arr = np.empty(n)
    y_arr = np.empty(n)
    ok_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] xo = x_arr
    cdef double[::1] yo = y_arr
    cdef unsigned char[::1] ok = ok_arr
    cdef double x, y, tx, ty, ex, ey, a, b, c, d, det, nx, ny, xx, yy, r2, f
    cdef bint done
    with nogil:
        for i in range(n):
            tx = xdv[i]; ty = ydv[i]
            x = tx; y = ty
            done = False
            for it in range(max_iter):
                _distort(x, y, k1, k2, k3, t1, t2, &ex, &ey)
                ex -= tx; ey -= ty
                if fabs(ex) <= tol and fabs(ey) <= tol:
                    done = True
                    break
                _djac(x, y, k1, k2, k3, t1, t2, &a, &b, &c, &d)
                det = a * d - b * c
                nx = NAN; ny = NAN
                if fabs(det) > 1e-12:
                    nx = x - (d * ex - b * ey) / det
                    ny = y - (-c * ex + a * ey) / det
                if isfinite(nx) and isfinite(ny):
                    x = nx; y = ny
                else:
                    xx = x * x; yy = y * y; r2 = xx + yy
                    f = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
                    nx = (tx - 2.0 * t1 * x * y - t2 * (r2 + 2.0 * xx)) / f
                    ny = (ty - 2.0 * t2 * x * y - t1 * (r2 + 2.0 * yy)) / f
                    x = nx; y = ny
            if not done:
                _distort(x, y, k1, k2, k3, t1, t2, &ex, &ey)
                ex -= tx; ey -= ty
                done = fabs(ex) <= tol and fabs(ey) <= tol
            if done:
                _distort(x, y, k1, k2, k3, t1, t2, &ex, &ey)
                ex -= tx; ey -= ty
                _djac(x, y, k1, k2, k3, t1, t2, &a, &b, &c, &d)
                det = a * d - b * c
                nx = x - (d * ex - b * ey) / det
                ny = y - (-c * ex + a * ey) / det
                if isfinite(nx) and isfinite(ny):
                    x = nx; y = ny
                done = isfinite(x) and isfinite(y)
            xo[i] = x; yo[i] = y
            ok[i] = done
    return x_arr, y_arr, ok_arr.astype(bool)


def accumulate_normal_equations(const double[:, ::1] points, const double[:, ::1] pixels,
                                const double[::1] weights, const double[::1] intr,
                                const double[:, ::1] R, const double[::1] t,
                                double loss_scale, double z_min):
    cdef Py_ssize_t n = points.shape[0], i
    cdef int j, k
    H_arr = np.zeros((15, 15))
    g_arr = np.zeros(15)
    cdef double[:, ::1] H = H_arr
    cdef double[::1] g = g_arr
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef double k1 = intr[4], k2 = intr[5], k3 = intr[6], t1 = intr[7], t2 = intr[8]
    cdef double X, Y, Z, px, py, pz, iz, x, y, xx, yy, xy, r2, r4, r6, f, xd, yd
    cdef double a, b, c, d, sw, ru, rv, s, rho, rho1, rho2, c2, inv, srho1, alpha, rscale
    cdef double acoef, pj, Dq
    cdef double du_dp[3]
    cdef double dv_dp[3]
    cdef double ju[15]
    cdef double jv[15]
    cdef double cost = 0.0
    cdef long n_used = 0, n_excl = 0
    c2 = loss_scale * loss_scale
    with nogil:
        for i in range(n):
            X = points[i, 0]; Y = points[i, 1]; Z = points[i, 2]
            px = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + t[0]
            py = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + t[1]
            pz = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + t[2]
            if not pz > z_min:
                n_excl += 1
                continue
            if weights[i] > 0:
                n_used += 1
            iz = 1.0 / pz
            x = px * iz; y = py * iz
            xx = x * x; yy = y * y; xy = x * y
            r2 = xx + yy; r4 = r2 * r2; r6 = r4 * r2
            f = 1.0 + k1 * r2 + k2 * r4 + k3 * r6
            xd = x * f + 2.0 * t1 * xy + t2 * (r2 + 2.0 * xx)
            yd = y * f + 2.0 * t2 * xy + t1 * (r2 + 2.0 * yy)
            sw = sqrt(weights[i])
            ru = sw * (pixels[i, 0] - (fx * xd + cx))
            rv = sw * (pixels[i, 1] - (fy * yd + cy))

            for j in range(15):
                ju[j] = 0.0; jv[j] = 0.0
            ju[0] = xd; jv[1] = yd
            ju[2] = 1.0; jv[3] = 1.0
            ju[4] = fx * x * r2; ju[5] = fx * x * r4; ju[6] = fx * x * r6
            ju[7] = fx * 2.0 * xy; ju[8] = fx * (r2 + 2.0 * xx)
            jv[4] = fy * y * r2; jv[5] = fy * y * r4; jv[6] = fy * y * r6
            jv[7] = fy * (r2 + 2.0 * yy); jv[8] = fy * 2.0 * xy
            _djac(x, y, k1, k2, k3, t1, t2, &a, &b, &c, &d)
            # d(u,v)/d(pc) through x = px/pz, y = py/pz
            du_dp[0] = fx * a * iz
            du_dp[1] = fx * b * iz
            du_dp[2] = -(fx * a * x + fx * b * y) * iz
            dv_dp[0] = fy * c * iz
            dv_dp[1] = fy * d * iz
            dv_dp[2] = -(fy * c * x + fy * d * y) * iz
            _rot_block(du_dp, R, X, Y, Z, &ju[9])
            _rot_block(dv_dp, R, X, Y, Z, &jv[9])
            ju[12] = du_dp[0]; ju[13] = du_dp[1]; ju[14] = du_dp[2]
            jv[12] = dv_dp[0]; jv[13] = dv_dp[1]; jv[14] = dv_dp[2]
            for j in range(15):
                ju[j] = -sw * ju[j]
                jv[j] = -sw * jv[j]

            s = ru * ru + rv * rv
            if loss_scale > 0.0:
                inv = 1.0 / (1.0 + s / c2)
                rho = c2 * log1p(s / c2)
                rho1 = inv
                rho2 = -inv * inv / c2
            else:
                rho = s; rho1 = 1.0; rho2 = 0.0
            cost += rho
            srho1 = sqrt(rho1)
            if s > 0.0 and rho2 > 0.0:
                Dq = 1.0 + 2.0 * s * rho2 / rho1
                if Dq < 0.0:
                    Dq = 0.0
                alpha = 1.0 - sqrt(Dq)
                rscale = srho1 / (1.0 - alpha)
                acoef = alpha / s
            else:
                rscale = srho1
                acoef = 0.0
            for j in range(15):
                pj = ru * ju[j] + rv * jv[j]
                ju[j] = srho1 * (ju[j] - acoef * ru * pj)
                jv[j] = srho1 * (jv[j] - acoef * rv * pj)
            ru = rscale * ru
            rv = rscale * rv
            for j in range(15):
                g[j] += ju[j] * ru + jv[j] * rv
                for k in range(j, 15):
                    H[j, k] += ju[j] * ju[k] + jv[j] * jv[k]
        for j in range(15):
            for k in range(j + 1, 15):
                H[k, j] = H[j, k]
    return H_arr, g_arr, cost, n_used, n_excl


cdef inline void _rot_block(double* dp, const double[:, ::1] R, double X, double Y,
                            double Z, double* out) noexcept nogil:
    # out = -(dp^T R) [X]x
    cdef double w0 = dp[0] * R[0, 0] + dp[1] * R[1, 0] + dp[2] * R[2, 0]
    cdef double w1 = dp[0] * R[0, 1] + dp[1] * R[1, 1] + dp[2] * R[2, 1]
    cdef double w2 = dp[0] * R[0, 2] + dp[1] * R[1, 2] + dp[2] * R[2, 2]
    # w^T [X]x = (w1*Z - w2*Y, w2*X - w0*Z, w0*Y - w1*X)
    out[0] = -(w1 * Z - w2 * Y)
    out[1] = -(w2 * X - w0 * Z)
    out[2] = -(w0 * Y - w1 * X)


def robust_cost(const double[:, ::1] points, const double[:, ::1] pixels,
                const double[::1] weights, const double[::1] intr,
                const double[:, ::1] R, const double[::1] t,
                double loss_scale, double z_min):
    cdef Py_ssize_t n = points.shape[0], i
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef double k1 = intr[4], k2 = intr[5], k3 = intr[6], t1 = intr[7], t2 = intr[8]
    cdef double X, Y, Z, px, py, pz, xd, yd, sw, du, dv, s
    cdef double c2 = loss_scale * loss_scale
    cdef double total = 0.0
    cdef long n_excl = 0
    with nogil:
        for i in range(n):
            X = points[i, 0]; Y = points[i, 1]; Z = points[i, 2]
            px = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + t[0]
            py = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + t[1]
            pz = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + t[2]
            if not pz > z_min:
                n_excl += 1
                continue
            _distort(px / pz, py / pz, k1, k2, k3, t1, t2, &xd, &yd)
            sw = sqrt(weights[i])
            du = sw * (pixels[i, 0] - (fx * xd + cx))
            dv = sw * (pixels[i, 1] - (fy * yd + cy))
            s = du * du + dv * dv
            if loss_scale > 0.0:
                total += c2 * log1p(s / c2)
            else:
                total += s
    return total, n_excl
