"""Pure-numpy factor kernels, vectorized over factors.

Same contract as the compiled ``_kernels`` module; used when the extension
is not built or when ``MULTICUE_KERNEL=python``.
"""

import numpy as np

from .geometry import so3_exp, so3_log, wrap_angle

WO, VO, LID, AMM, MRF, GPS, IMU, DEM = range(8)

_BASIS = np.eye(3)


def _tilt(a, b):
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    T = np.empty(a.shape + (3, 3))
    # Ry(b) @ Rx(a)
    T[..., 0, 0] = cb
    T[..., 0, 1] = sb * sa
    T[..., 0, 2] = sb * ca
    T[..., 1, 0] = 0.0
    T[..., 1, 1] = ca
    T[..., 1, 2] = -sa
    T[..., 2, 0] = -sb
    T[..., 2, 1] = cb * sa
    T[..., 2, 2] = cb * ca
    return T


def _amm_residual(trel, Rrel):
    drx = np.arctan2(-Rrel[:, 1, 2], np.hypot(Rrel[:, 0, 2], Rrel[:, 2, 2]))
    dry = np.arctan2(Rrel[:, 0, 2], Rrel[:, 2, 2])
    drz = np.arctan2(Rrel[:, 1, 0], Rrel[:, 1, 1])
    T = _tilt(drx, dry)
    u = np.einsum("fji,fj->fi", T, trel)
    rho = np.hypot(u[:, 0], u[:, 1]) * np.where(u[:, 0] < 0.0, -1.0, 1.0)
    chord = np.stack([rho * np.cos(0.5 * drz), rho * np.sin(0.5 * drz), np.zeros_like(rho)], axis=1)
    tproj = np.einsum("fij,fj->fi", T, chord)
    c, s = np.cos(drz), np.sin(drz)
    Rz = np.zeros_like(Rrel)
    Rz[:, 0, 0] = c
    Rz[:, 0, 1] = -s
    Rz[:, 1, 0] = s
    Rz[:, 1, 1] = c
    Rz[:, 2, 2] = 1.0
    Rproj = T @ Rz
    e = np.empty((len(trel), 6))
    e[:, :3] = trel - tproj
    e[:, 3:] = so3_log(np.swapaxes(Rproj, 1, 2) @ Rrel)
    return e


def _residual(ti, Ri, tj, Rj, kinds, z, Rz):
    F = len(kinds)
    e = np.zeros((F, 6))
    binary = kinds <= MRF
    rel = binary & (kinds != MRF)
    if np.any(rel):
        Rit = np.swapaxes(Ri[rel], 1, 2)
        trel = np.einsum("fij,fj->fi", Rit, tj[rel] - ti[rel])
        Rrel = Rit @ Rj[rel]
        k = kinds[rel]
        zr = z[rel]
        er = np.zeros((len(k), 6))
        full = (k == VO) | (k == LID)
        if np.any(full):
            er[full, :3] = zr[full, :3] - trel[full]
            er[full, 3:] = so3_log(np.swapaxes(Rrel[full], 1, 2) @ Rz[rel][full])
        wo = k == WO
        if np.any(wo):
            er[wo, 0:2] = zr[wo, 0:2] - trel[wo, 0:2]
            er[wo, 5] = wrap_angle(zr[wo, 5] - so3_log(Rrel[wo])[:, 2])
        amm = k == AMM
        if np.any(amm):
            er[amm] = _amm_residual(trel[amm], Rrel[amm])
        e[rel] = er
    m = kinds == MRF
    e[m, 2] = z[m, 2] - (ti[m, 2] - tj[m, 2])
    m = kinds == GPS
    e[m, :3] = z[m, :3] - ti[m]
    m = kinds == DEM
    e[m, 2] = z[m, 2] - ti[m, 2]
    m = kinds == IMU
    if np.any(m):
        R = Ri[m]
        roll = np.arctan2(R[:, 2, 1], R[:, 2, 2])
        pitch = np.arctan2(-R[:, 2, 0], np.hypot(R[:, 2, 1], R[:, 2, 2]))
        e[m, 3] = wrap_angle(z[m, 3] - roll)
        e[m, 4] = wrap_angle(z[m, 4] - pitch)
    return e


def _gather(states, kinds, ii, jj):
    states = np.asarray(states, dtype=float)
    R = so3_exp(states[:, 3:])
    t = states[:, :3]
    jsafe = np.where(jj < 0, ii, jj)
    return t[ii], R[ii], t[jsafe], R[jsafe]


def residuals(states, kinds, ii, jj, z):
    kinds = np.asarray(kinds)
    ii = np.asarray(ii)
    jj = np.asarray(jj)
    z = np.asarray(z, dtype=float)
    if len(kinds) == 0:
        return np.zeros((0, 6))
    ti, Ri, tj, Rj = _gather(states, kinds, ii, jj)
    return _residual(ti, Ri, tj, Rj, kinds, z, so3_exp(z[:, 3:]))


def jacobians(states, kinds, ii, jj, z, eps):
    """Residuals plus central-difference Jacobians w.r.t. both nodes.

    Perturbations are local: additive on translation, right-composed on
    rotation.  GPS, DEM and MRF use their exact constant Jacobians.
    Returns ``(E, Ji, Jj)`` with ``Jj`` zero for unary factors.
    """
    kinds = np.asarray(kinds)
    ii = np.asarray(ii)
    jj = np.asarray(jj)
    z = np.asarray(z, dtype=float)
    F = len(kinds)
    Ji = np.zeros((F, 6, 6))
    Jj = np.zeros((F, 6, 6))
    if F == 0:
        return np.zeros((0, 6)), Ji, Jj
    ti, Ri, tj, Rj = _gather(states, kinds, ii, jj)
    Rz = so3_exp(z[:, 3:])
    E = _residual(ti, Ri, tj, Rj, kinds, z, Rz)

    numeric = (kinds != GPS) & (kinds != DEM) & (kinds != MRF)
    if np.any(numeric):
        k = kinds[numeric]
        a, Ra, b, Rb, zz, Rzz = ti[numeric], Ri[numeric], tj[numeric], Rj[numeric], z[numeric], Rz[numeric]
        bin_mask = k <= MRF
        Ja = np.zeros((len(k), 6, 6))
        Jb = np.zeros((len(k), 6, 6))
        for c in range(6):
            if c < 3:
                d = eps * _BASIS[c]
                ep = _residual(a + d, Ra, b, Rb, k, zz, Rzz)
                em = _residual(a - d, Ra, b, Rb, k, zz, Rzz)
                Ja[:, :, c] = (ep - em) / (2 * eps)
                ep = _residual(a, Ra, b + d, Rb, k, zz, Rzz)
                em = _residual(a, Ra, b - d, Rb, k, zz, Rzz)
                Jb[:, :, c] = (ep - em) / (2 * eps)
            else:
                Dp = so3_exp(eps * _BASIS[c - 3])
                Dm = Dp.T
                ep = _residual(a, Ra @ Dp, b, Rb, k, zz, Rzz)
                em = _residual(a, Ra @ Dm, b, Rb, k, zz, Rzz)
                Ja[:, :, c] = (ep - em) / (2 * eps)
                ep = _residual(a, Ra, b, Rb @ Dp, k, zz, Rzz)
                em = _residual(a, Ra, b, Rb @ Dm, k, zz, Rzz)
                Jb[:, :, c] = (ep - em) / (2 * eps)
        Jb[~bin_mask] = 0.0
        Ji[numeric] = Ja
        Jj[numeric] = Jb

    m = kinds == GPS
    Ji[m, 0, 0] = Ji[m, 1, 1] = Ji[m, 2, 2] = -1.0
    m = kinds == DEM
    Ji[m, 2, 2] = -1.0
    m = kinds == MRF
    Ji[m, 2, 2] = -1.0
    Jj[m, 2, 2] = 1.0
    return E, Ji, Jj
