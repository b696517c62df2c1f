# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled factor kernels: residuals and central-difference Jacobians.

Mirrors ``_kernels_py``; every factor is evaluated with fixed-size C arrays.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, atan2, hypot, fmod, fabs, M_PI

cnp.import_array()

cdef double SMALL = 1e-8

cdef enum:
    K_WO = 0
    K_VO = 1
    K_LID = 2
    K_AMM = 3
    K_MRF = 4
    K_GPS = 5
    K_IMU = 6
    K_DEM = 7


cdef inline double wrap(double a) noexcept nogil:
    cdef double w = fmod(a + M_PI, 2.0 * M_PI)
    if w < 0:
        w += 2.0 * M_PI
    w -= M_PI
    if w == -M_PI:
        w = M_PI
    return w


cdef inline void so3_exp(const double* r, double* R) noexcept nogil:
    cdef double t2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
    cdef double th = sqrt(t2)
    cdef double a, b
    if th < SMALL:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = sin(th) / th
        b = (1.0 - cos(th)) / t2
    cdef double d = 1.0 - b * t2
    R[0] = d + b * r[0] * r[0]
    R[1] = b * r[0] * r[1] - a * r[2]
    R[2] = b * r[0] * r[2] + a * r[1]
    R[3] = b * r[1] * r[0] + a * r[2]
    R[4] = d + b * r[1] * r[1]
    R[5] = b * r[1] * r[2] - a * r[0]
    R[6] = b * r[2] * r[0] - a * r[1]
    R[7] = b * r[2] * r[1] + a * r[0]
    R[8] = d + b * r[2] * r[2]


cdef inline void so3_log(const double* R, double* out) noexcept nogil:
    cdef double v0 = R[7] - R[5]
    cdef double v1 = R[2] - R[6]
    cdef double v2 = R[3] - R[1]
    cdef double c = 0.5 * (R[0] + R[4] + R[8] - 1.0)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    cdef double s = 0.5 * sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    cdef double th = atan2(s, c)
    cdef double S[9]
    cdef double fac, diag0, diag1, diag2, piv, ax0, ax1, ax2, nrm, d
    cdef int k
    cdef bint flip
    if c > 0.0:
        if th < SMALL:
            fac = 0.5 * (1.0 + th * th / 6.0)
        else:
            fac = th / (2.0 * s)
        out[0] = fac * v0
        out[1] = fac * v1
        out[2] = fac * v2
        return
    # near pi: axis from the symmetric part
    d = 1.0 - c
    S[0] = (R[0] - c) / d
    S[4] = (R[4] - c) / d
    S[8] = (R[8] - c) / d
    S[1] = 0.5 * (R[1] + R[3]) / d
    S[2] = 0.5 * (R[2] + R[6]) / d
    S[5] = 0.5 * (R[5] + R[7]) / d
    S[3] = S[1]
    S[6] = S[2]
    S[7] = S[5]
    k = 0
    if S[4] > S[0]:
        k = 1
    if S[8] > S[4 * k]:
        k = 2
    piv = S[4 * k]
    if piv < 1e-300:
        piv = 1e-300
    piv = sqrt(piv)
    ax0 = S[3 * k] / piv
    ax1 = S[3 * k + 1] / piv
    ax2 = S[3 * k + 2] / piv
    nrm = sqrt(ax0 * ax0 + ax1 * ax1 + ax2 * ax2)
    ax0 /= nrm
    ax1 /= nrm
    ax2 /= nrm
    d = ax0 * v0 + ax1 * v1 + ax2 * v2
    if fabs(d) <= 1e-12:
        # half turn: canonical sign, first nonzero component positive
        flip = (ax0 < -1e-12) or (-1e-12 <= ax0 <= 1e-12 and (ax1 < -1e-12 or
                (-1e-12 <= ax1 <= 1e-12 and ax2 < 0.0)))
    else:
        flip = d < 0.0
    if flip:
        ax0 = -ax0
        ax1 = -ax1
        ax2 = -ax2
    out[0] = th * ax0
    out[1] = th * ax1
    out[2] = th * ax2


cdef inline void matmul(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef inline void matTmul(const double* A, const double* B, double* C) noexcept nogil:
    # C = A^T B
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[i] * B[j] + A[3 + i] * B[3 + j] + A[6 + i] * B[6 + j]


cdef inline void tilt(double a, double b, double* T) noexcept nogil:
    cdef double ca = cos(a), sa = sin(a), cb = cos(b), sb = sin(b)
    T[0] = cb
    T[1] = sb * sa
    T[2] = sb * ca
    T[3] = 0.0
    T[4] = ca
    T[5] = -sa
    T[6] = -sb
    T[7] = cb * sa
    T[8] = cb * ca


cdef void residual(int kind, const double* ti, const double* Ri, const double* tj,
                   const double* Rj, const double* z, const double* Rz, double* e) noexcept nogil:
    cdef double d[3]
    cdef double trel[3]
    cdef double Rrel[9]
    cdef double M[9]
    cdef double r[3]
    cdef double T[9]
    cdef double u[3]
    cdef double tp[3]
    cdef double Rzz[9]
    cdef double Rp[9]
    cdef double drx, dry, drz, rho, ch, sh
    cdef int k
    for k in range(6):
        e[k] = 0.0
    if kind == K_GPS:
        e[0] = z[0] - ti[0]
        e[1] = z[1] - ti[1]
        e[2] = z[2] - ti[2]
        return
    if kind == K_DEM:
        e[2] = z[2] - ti[2]
        return
    if kind == K_MRF:
        e[2] = z[2] - (ti[2] - tj[2])
        return
    if kind == K_IMU:
        e[3] = wrap(z[3] - atan2(Ri[7], Ri[8]))
        e[4] = wrap(z[4] - atan2(-Ri[6], hypot(Ri[7], Ri[8])))
        return
    d[0] = tj[0] - ti[0]
    d[1] = tj[1] - ti[1]
    d[2] = tj[2] - ti[2]
    for k in range(3):
        trel[k] = Ri[k] * d[0] + Ri[3 + k] * d[1] + Ri[6 + k] * d[2]
    matTmul(Ri, Rj, Rrel)
    if kind == K_VO or kind == K_LID:
        e[0] = z[0] - trel[0]
        e[1] = z[1] - trel[1]
        e[2] = z[2] - trel[2]
        matTmul(Rrel, Rz, M)
        so3_log(M, r)
        e[3] = r[0]
        e[4] = r[1]
        e[5] = r[2]
    elif kind == K_WO:
        e[0] = z[0] - trel[0]
        e[1] = z[1] - trel[1]
        so3_log(Rrel, r)
        e[5] = wrap(z[5] - r[2])
    elif kind == K_AMM:
        drx = atan2(-Rrel[5], hypot(Rrel[2], Rrel[8]))
        dry = atan2(Rrel[2], Rrel[8])
        drz = atan2(Rrel[3], Rrel[4])
        tilt(drx, dry, T)
        for k in range(3):
            u[k] = T[k] * trel[0] + T[3 + k] * trel[1] + T[6 + k] * trel[2]
        rho = hypot(u[0], u[1])
        if u[0] < 0.0:
            rho = -rho
        ch = rho * cos(0.5 * drz)
        sh = rho * sin(0.5 * drz)
        for k in range(3):
            tp[k] = T[3 * k] * ch + T[3 * k + 1] * sh
        e[0] = trel[0] - tp[0]
        e[1] = trel[1] - tp[1]
        e[2] = trel[2] - tp[2]
        Rzz[0] = cos(drz)
        Rzz[1] = -sin(drz)
        Rzz[2] = 0.0
        Rzz[3] = sin(drz)
        Rzz[4] = cos(drz)
        Rzz[5] = 0.0
        Rzz[6] = 0.0
        Rzz[7] = 0.0
        Rzz[8] = 1.0
        matmul(T, Rzz, Rp)
        matTmul(Rp, Rrel, M)
        so3_log(M, r)
        e[3] = r[0]
        e[4] = r[1]
        e[5] = r[2]


def residuals(double[:, ::1] states, int[::1] kinds, int[::1] ii, int[::1] jj, double[:, ::1] z):
    cdef Py_ssize_t F = kinds.shape[0], f
    cdef Py_ssize_t N = states.shape[0]
    out = np.zeros((F, 6))
    cdef double[:, ::1] E = out
    Rall = np.empty((N, 9))
    cdef double[:, ::1] Rs = Rall
    cdef double Rz[9]
    cdef Py_ssize_t n
    cdef int i, j
    with nogil:
        for n in range(N):
            so3_exp(&states[n, 3], &Rs[n, 0])
        for f in range(F):
            i = ii[f]
            j = jj[f]
            if j < 0:
                j = i
            so3_exp(&z[f, 3], Rz)
            residual(kinds[f], &states[i, 0], &Rs[i, 0], &states[j, 0], &Rs[j, 0],
                     &z[f, 0], Rz, &E[f, 0])
    return out


def jacobians(double[:, ::1] states, int[::1] kinds, int[::1] ii, int[::1] jj,
              double[:, ::1] z, double eps):
    cdef Py_ssize_t F = kinds.shape[0], f
    cdef Py_ssize_t N = states.shape[0], n
    Eo = np.zeros((F, 6))
    Jio = np.zeros((F, 6, 6))
    Jjo = np.zeros((F, 6, 6))
    cdef double[:, ::1] E = Eo
    cdef double[:, :, ::1] Ji = Jio
    cdef double[:, :, ::1] Jj = Jjo
    Rall = np.empty((N, 9))
    cdef double[:, ::1] Rs = Rall
    cdef double Rz[9]
    cdef double Dp[3][9]
    cdef double Dm[3][9]
    cdef double basis[3]
    cdef double tp[3]
    cdef double Rp[9]
    cdef double ep[6]
    cdef double em[6]
    cdef int i, j, c, r, kind, binary
    cdef double inv2 = 0.5 / eps

    for c in range(3):
        basis[0] = 0.0
        basis[1] = 0.0
        basis[2] = 0.0
        basis[c] = eps
        so3_exp(basis, Dp[c])
        basis[c] = -eps
        so3_exp(basis, Dm[c])

    with nogil:
        for n in range(N):
            so3_exp(&states[n, 3], &Rs[n, 0])
        for f in range(F):
            kind = kinds[f]
            i = ii[f]
            j = jj[f]
            binary = j >= 0
            if not binary:
                j = i
            so3_exp(&z[f, 3], Rz)
            residual(kind, &states[i, 0], &Rs[i, 0], &states[j, 0], &Rs[j, 0],
                     &z[f, 0], Rz, &E[f, 0])
            if kind == K_GPS:
                Ji[f, 0, 0] = -1.0
                Ji[f, 1, 1] = -1.0
                Ji[f, 2, 2] = -1.0
                continue
            if kind == K_DEM:
                Ji[f, 2, 2] = -1.0
                continue
            if kind == K_MRF:
                Ji[f, 2, 2] = -1.0
                Jj[f, 2, 2] = 1.0
                continue
            # node i
            for c in range(6):
                if c < 3:
                    tp[0] = states[i, 0]
                    tp[1] = states[i, 1]
                    tp[2] = states[i, 2]
                    tp[c] = states[i, c] + eps
                    residual(kind, tp, &Rs[i, 0], &states[j, 0], &Rs[j, 0], &z[f, 0], Rz, ep)
                    tp[c] = states[i, c] - eps
                    residual(kind, tp, &Rs[i, 0], &states[j, 0], &Rs[j, 0], &z[f, 0], Rz, em)
                else:
                    matmul(&Rs[i, 0], Dp[c - 3], Rp)
                    residual(kind, &states[i, 0], Rp, &states[j, 0], &Rs[j, 0], &z[f, 0], Rz, ep)
                    matmul(&Rs[i, 0], Dm[c - 3], Rp)
                    residual(kind, &states[i, 0], Rp, &states[j, 0], &Rs[j, 0], &z[f, 0], Rz, em)
                for r in range(6):
                    Ji[f, r, c] = (ep[r] - em[r]) * inv2
            if not binary:
                continue
            for c in range(6):
                if c < 3:
                    tp[0] = states[j, 0]
                    tp[1] = states[j, 1]
                    tp[2] = states[j, 2]
                    tp[c] = states[j, c] + eps
                    residual(kind, &states[i, 0], &Rs[i, 0], tp, &Rs[j, 0], &z[f, 0], Rz, ep)
                    tp[c] = states[j, c] - eps
                    residual(kind, &states[i, 0], &Rs[i, 0], tp, &Rs[j, 0], &z[f, 0], Rz, em)
                else:
                    matmul(&Rs[j, 0], Dp[c - 3], Rp)
                    residual(kind, &states[i, 0], &Rs[i, 0], &states[j, 0], Rp, &z[f, 0], Rz, ep)
                    matmul(&Rs[j, 0], Dm[c - 3], Rp)
                    residual(kind, &states[i, 0], &Rs[i, 0], &states[j, 0], Rp, &z[f, 0], Rz, em)
                for r in range(6):
                    Jj[f, r, c] = (ep[r] - em[r]) * inv2
    return Eo, Jio, Jjo
