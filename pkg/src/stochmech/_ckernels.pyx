# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: ensemble path stepping, tangent propagation and the
finite-volume sweeps of the phase-space solver.

Model codes: 0 free, 1 harmonic, 2 inverted, 3 pendulum, 4 double well.
Kernel parameters ``prm = [m, a0, a1]`` (see ``HamiltonianModel.kernel_params``).
Arithmetic is written in the same operation order as ``_pykernels`` so that
polynomial models agree bit for bit between backends.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, fmod, M_PI

cnp.import_array()

cdef double OVERFLOW = 1e150
cdef double TWO_PI = 2.0 * M_PI


cdef inline double _force(int code, double m, double a0, double a1, double x) noexcept nogil:
    cdef double u
    if code == 0:
        return 0.0
    elif code == 1:
        return a0 * x
    elif code == 2:
        return -(a0 * x)
    elif code == 3:
        return a0 * sin(x)
    u = x / a1
    return 4.0 * a0 * u * (u * u - 1.0) / a1


cdef inline double _curv(int code, double m, double a0, double a1, double x) noexcept nogil:
    if code == 0:
        return 0.0
    elif code == 1:
        return a0
    elif code == 2:
        return -a0
    elif code == 3:
        return a0 * cos(x)
    return a0 * (12.0 * x * x / (a1 * a1) - 4.0) / (a1 * a1)


cdef inline double _wrap(double x) noexcept nogil:
    # numpy.mod semantics (result has the sign of the divisor)
    cdef double r = fmod(x + M_PI, TWO_PI)
    if r != 0.0 and r < 0.0:
        r += TWO_PI
    return r - M_PI


def integrate_block(int code, prm, x0, p0, dW, double dt, Py_ssize_t nsteps,
                    int scheme, int gating, double hbar, double rate_tol,
                    Py_ssize_t sample_every, bint periodic):
    cdef double[::1] P = np.ascontiguousarray(prm, dtype=np.float64)
    cdef double m = P[0], a0 = P[1], a1 = P[2]
    x_arr = np.array(x0, dtype=np.float64, order="C", copy=True)
    p_arr = np.array(p0, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] p = p_arr
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t S = nsteps // sample_every + 1
    xs_arr = np.full((B, S, n), np.nan)
    ps_arr = np.full((B, S, n), np.nan)
    alive_arr = np.ones(B, dtype=np.uint8)
    cdef double[:, :, ::1] XS = xs_arr
    cdef double[:, :, ::1] PS = ps_arr
    cdef unsigned char[::1] alive = alive_arr
    cdef double[:, :, ::1] W
    cdef bint noisy = scheme != 0 and dW is not None
    if noisy:
        W = np.ascontiguousarray(dW, dtype=np.float64)
    else:
        W = np.zeros((1, 1, 2 * n))
    xn_arr = np.empty(n)
    pn_arr = np.empty(n)
    cdef double[::1] xn = xn_arr, pn = pn_arr
    cdef Py_ssize_t b, k, i, s, next_sample = sample_every
    cdef double h = 0.5 * dt, sx0 = sqrt(hbar / (2.0 * m))
    cdef double c, sx, sp, dwx, dwp, fx, fp, xs_, ps_, fx2, fp2, ph, xi, pi_
    cdef bint bad
    XS[:, 0, :] = x
    PS[:, 0, :] = p
    with nogil:
        for k in range(nsteps):
            for b in range(B):
                if not alive[b]:
                    continue
                bad = False
                for i in range(n):
                    xi = x[b, i]
                    pi_ = p[b, i]
                    if scheme == 0:
                        ph = pi_ - h * _force(code, m, a0, a1, xi)
                        xs_ = xi + dt * (ph / m)
                        ps_ = ph - h * _force(code, m, a0, a1, xs_)
                    else:
                        if noisy:
                            dwx = W[b, k, i]
                            dwp = W[b, k, n + i]
                        else:
                            dwx = 0.0
                            dwp = 0.0
                        c = _curv(code, m, a0, a1, xi)
                        if gating == 0:
                            sx = 0.0
                            sp = 0.0
                        elif -c > rate_tol:
                            sx = sx0
                            sp = sqrt(hbar * -c / 2.0)
                        else:
                            sx = sx0 if gating == 2 else 0.0
                            sp = 0.0
                        if scheme == 1:
                            fx = pi_ / m
                            fp = -_force(code, m, a0, a1, xi)
                            xs_ = xi + fx * dt + sx * dwx
                            ps_ = pi_ + fp * dt + sp * dwp
                        elif scheme == 2:
                            fx = pi_ / m
                            fp = -_force(code, m, a0, a1, xi)
                            xs_ = xi + fx * dt + sx * dwx
                            ps_ = pi_ + fp * dt + sp * dwp
                            fx2 = ps_ / m
                            fp2 = -_force(code, m, a0, a1, xs_)
                            xs_ = xi + (0.5 * (fx + fx2)) * dt + sx * dwx
                            ps_ = pi_ + (0.5 * (fp + fp2)) * dt + sp * dwp
                        else:
                            ph = pi_ - h * _force(code, m, a0, a1, xi)
                            xs_ = xi + dt * (ph / m)
                            ps_ = ph - h * _force(code, m, a0, a1, xs_)
                            xs_ = xs_ + sx * dwx
                            ps_ = ps_ + sp * dwp
                    if periodic:
                        xs_ = _wrap(xs_)
                    if not (fabs(xs_) < OVERFLOW and fabs(ps_) < OVERFLOW):
                        bad = True
                    xn[i] = xs_
                    pn[i] = ps_
                if bad:
                    alive[b] = 0
                    continue
                for i in range(n):
                    x[b, i] = xn[i]
                    p[b, i] = pn[i]
            if k + 1 == next_sample:
                s = next_sample // sample_every
                next_sample = next_sample + sample_every
                for b in range(B):
                    if alive[b]:
                        for i in range(n):
                            XS[b, s, i] = x[b, i]
                            PS[b, s, i] = p[b, i]
    return xs_arr, ps_arr, alive_arr == 0


def tangent_leapfrog(int code, prm, double[::1] x, double[::1] p, double[:, ::1] Y,
                     double dt, Py_ssize_t nsteps, bint periodic):
    cdef double[::1] P = np.ascontiguousarray(prm, dtype=np.float64)
    cdef double m = P[0], a0 = P[1], a1 = P[2]
    cdef Py_ssize_t n = x.shape[0], K = Y.shape[1]
    cdef Py_ssize_t s, i, j
    cdef double h = 0.5 * dt, c
    with nogil:
        for s in range(nsteps):
            for i in range(n):
                c = _curv(code, m, a0, a1, x[i])
                p[i] = p[i] - h * _force(code, m, a0, a1, x[i])
                for j in range(K):
                    Y[n + i, j] = Y[n + i, j] - h * c * Y[i, j]
                x[i] = x[i] + dt * (p[i] / m)
                for j in range(K):
                    Y[i, j] = Y[i, j] + dt * (Y[n + i, j] / m)
                if periodic:
                    x[i] = _wrap(x[i])
                c = _curv(code, m, a0, a1, x[i])
                p[i] = p[i] - h * _force(code, m, a0, a1, x[i])
                for j in range(K):
                    Y[n + i, j] = Y[n + i, j] - h * c * Y[i, j]


cdef inline double _phi(double r, int limiter) noexcept nogil:
    cdef double ar
    if limiter == 1:
        if r <= 0.0:
            return 0.0
        return r if r < 1.0 else 1.0
    elif limiter == 2:
        ar = fabs(r)
        return (r + ar) / (1.0 + ar)
    elif limiter == 3:
        ar = 2.0 * r
        if 0.5 * (1.0 + r) < ar:
            ar = 0.5 * (1.0 + r)
        if 2.0 < ar:
            ar = 2.0
        return ar if ar > 0.0 else 0.0
    return 0.0


cdef inline double _face_flux(double lm, double l, double r, double rp, double vl,
                              double ac, int limiter, bint slope_l, bint slope_r) noexcept nogil:
    # lm, l | r, rp are the two cells on each side of the face
    cdef double jump = r - l, phi = 0.0
    if vl > 0.0:
        if jump != 0.0 and slope_l:
            phi = _phi((l - lm) / jump, limiter)
        return vl * (l + 0.5 * (1.0 - ac) * phi * jump)
    if jump != 0.0 and slope_r:
        phi = _phi((rp - r) / jump, limiter)
    return vl * (r - 0.5 * (1.0 - ac) * phi * jump)


cdef inline Py_ssize_t _index(Py_ssize_t i, Py_ssize_t N, bint periodic) noexcept nogil:
    if periodic:
        i = i % N
        if i < 0:
            i += N
        return i
    if i < 0:
        return 0
    if i >= N:
        return N - 1
    return i


def advect_lines(rho, vel, double dt, double h, int axis, bint periodic, int limiter):
    cdef double[:, ::1] a = np.ascontiguousarray(rho, dtype=np.float64)
    cdef double[::1] v = np.ascontiguousarray(vel, dtype=np.float64)
    out_arr = np.empty_like(np.asarray(a))
    cdef double[:, ::1] out = out_arr
    cdef bint along0 = axis == 0
    cdef Py_ssize_t N = a.shape[0] if along0 else a.shape[1]
    cdef Py_ssize_t L = a.shape[1] if along0 else a.shape[0]
    cdef double lam = dt / h
    # neighbour indices of every face f (between cells f-1 and f)
    idx_arr = np.empty((N + 1, 4), dtype=np.intp)
    sl_arr = np.empty(N + 1, dtype=np.uint8)
    sr_arr = np.empty(N + 1, dtype=np.uint8)
    wall_arr = np.empty(N + 1, dtype=np.uint8)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef unsigned char[::1] SL = sl_arr, SR = sr_arr, WALL = wall_arr
    cdef Py_ssize_t f, i, j, line
    for f in range(N + 1):
        idx[f, 0] = _index(f - 2, N, periodic)
        idx[f, 1] = _index(f - 1, N, periodic)
        idx[f, 2] = _index(f, N, periodic)
        idx[f, 3] = _index(f + 1, N, periodic)
        WALL[f] = (not periodic) and (f == 0 or f == N)
        SL[f] = periodic or (f >= 2 and f != N)
        SR[f] = periodic or (f <= N - 2 and f != 0)
    cdef double[::1] Fp, Fc, tmp
    cdef double vl, ac
    if along0:
        fp_arr = np.zeros(L)
        fc_arr = np.zeros(L)
        Fp = fp_arr
        Fc = fc_arr
        with nogil:
            for f in range(N + 1):
                if WALL[f]:
                    for j in range(L):
                        Fc[j] = 0.0
                else:
                    for j in range(L):
                        vl = v[j]
                        ac = fabs(vl * lam)
                        Fc[j] = _face_flux(a[idx[f, 0], j], a[idx[f, 1], j], a[idx[f, 2], j],
                                           a[idx[f, 3], j], vl, ac, limiter, SL[f], SR[f])
                if f >= 1:
                    i = f - 1
                    for j in range(L):
                        out[i, j] = a[i, j] - lam * (Fc[j] - Fp[j])
                tmp = Fp
                Fp = Fc
                Fc = tmp
    else:
        flux_arr = np.empty(N + 1)
        Fc = flux_arr
        with nogil:
            for line in range(L):
                vl = v[line]
                ac = fabs(vl * lam)
                for f in range(N + 1):
                    if WALL[f]:
                        Fc[f] = 0.0
                    else:
                        Fc[f] = _face_flux(a[line, idx[f, 0]], a[line, idx[f, 1]], a[line, idx[f, 2]],
                                           a[line, idx[f, 3]], vl, ac, limiter, SL[f], SR[f])
                for i in range(N):
                    out[line, i] = a[line, i] - lam * (Fc[i + 1] - Fc[i])
    return out_arr


def diffuse(rho, Dx, Dp, double dt, double dx, double dp, bint periodic_x, bint periodic_p):
    cdef double[:, ::1] a = np.ascontiguousarray(rho, dtype=np.float64)
    cdef double[::1] DX = np.ascontiguousarray(Dx, dtype=np.float64)
    cdef double[::1] DP = np.ascontiguousarray(Dp, dtype=np.float64)
    out_arr = np.array(a, copy=True)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t nx = a.shape[0], npp = a.shape[1]
    cdef Py_ssize_t i, j, ip, jp, nfx, nfp
    cdef double Df, F, G, kx = dt / dx, kp = dt / dp
    nfx = nx if periodic_x else nx - 1
    nfp = npp if periodic_p else npp - 1
    with nogil:
        for i in range(nfx):
            ip = i + 1
            if ip == nx:
                ip = 0
            Df = 0.5 * (DX[i] + DX[ip])
            if Df == 0.0:
                continue
            for j in range(npp):
                F = Df * (a[i, j] - a[ip, j]) / dx
                out[i, j] -= kx * F
                out[ip, j] += kx * F
        for i in range(nx):
            if DP[i] == 0.0:
                continue
            for j in range(nfp):
                jp = j + 1
                if jp == npp:
                    jp = 0
                G = DP[i] * (a[i, j] - a[i, jp]) / dp
                out[i, j] -= kp * G
                out[i, jp] += kp * G
    return out_arr
