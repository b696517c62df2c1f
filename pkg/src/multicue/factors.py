"""Constraint types of the multi-cue pose graph.

Each factor carries a 6-vector measurement ``z`` and a 6x6 information
matrix; components outside a sensor's observable subspace are zero in both.
This module holds the readable single-factor reference of every measurement
model plus the rules that turn sensor covariances into information matrices.
The batched residual kernels in :mod:`multicue.kernels` must agree with
:func:`error` here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dem import DemGrid, OutOfBounds, dem_query
from .geometry import Pose6D, phi, relative, roll_pitch_yaw, rot_diff, wrap_angle

EPS_SCALE = 1e-4
MRF_MIN_DIST = 0.05


class FactorKind(enum.IntEnum):
    WO = 0
    VO = 1
    LID = 2
    AMM = 3
    MRF = 4
    GPS = 5
    IMU = 6
    DEM = 7

    @property
    def binary(self) -> bool:
        return self <= FactorKind.MRF


ALL_KINDS = frozenset(FactorKind)

# observable components of each kind: (t_x, t_y, t_z, r_x, r_y, r_z)
ACTIVE = {
    FactorKind.WO: (0, 1, 5),
    FactorKind.VO: (0, 1, 2, 3, 4, 5),
    FactorKind.LID: (0, 1, 2, 3, 4, 5),
    FactorKind.AMM: (0, 1, 2, 3, 4, 5),
    FactorKind.MRF: (2,),
    FactorKind.GPS: (0, 1, 2),
    FactorKind.IMU: (3, 4),
    FactorKind.DEM: (2,),
}


class NotPositiveDefinite(ValueError):
    pass


@dataclass(frozen=True)
class Factor:
    kind: FactorKind
    node_i: int
    node_j: Optional[int]
    z: np.ndarray
    info: np.ndarray

    def __post_init__(self):
        kind = FactorKind(self.kind)
        z = np.array(self.z, dtype=float).reshape(6)
        info = np.array(self.info, dtype=float).reshape(6, 6)
        if kind.binary:
            if self.node_j is None or self.node_j == self.node_i:
                raise ValueError(f"{kind.name} needs two distinct nodes")
        elif self.node_j is not None:
            raise ValueError(f"{kind.name} is unary")
        if not np.allclose(info, info.T, atol=1e-9):
            raise ValueError("information matrix must be symmetric")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "info", info)

    def nodes(self) -> tuple[int, ...]:
        return (self.node_i,) if self.node_j is None else (self.node_i, self.node_j)


@dataclass(frozen=True)
class WeightParams:
    lambda_vo_r: float = 5.0
    lambda_vo_t: float = 1.0
    lambda_mrf: float = 0.8
    w_dem_z: float = 5.0
    vo_fail_threshold: float = 0.1
    vo_fail_scale: float = 0.01

    def __post_init__(self):
        for name in ("lambda_vo_r", "lambda_vo_t", "lambda_mrf", "w_dem_z",
                     "vo_fail_threshold", "vo_fail_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.vo_fail_scale < 1:
            raise ValueError("vo_fail_scale must be < 1")


# ---------------------------------------------------------------------------
# measurement models

def _planar_tilt(rx: float, ry: float) -> np.ndarray:
    """Rotation about x by ``rx`` followed by rotation about y by ``ry``."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    return Ry @ Rx


def ackermann_transform(rho: float, drz: float) -> np.ndarray:
    """Arc-chord motion about the instantaneous center of rotation.

    The chord points along half the heading change; the heading itself turns
    by the full ``drz``.
    """
    ch, sh = np.cos(drz / 2.0), np.sin(drz / 2.0)
    c, s = np.cos(drz), np.sin(drz)
    return np.array([[c, -s, 0.0, rho * ch],
                     [s, c, 0.0, rho * sh],
                     [0.0, 0.0, 1.0, 0.0],
                     [0.0, 0.0, 0.0, 1.0]])


def tilt_transform(drx: float, dry: float) -> np.ndarray:
    X = np.eye(4)
    X[:3, :3] = _planar_tilt(drx, dry)
    return X


def ackermann_params(X_rel: np.ndarray) -> tuple[float, float, float, float]:
    """Recover ``(rho, drz, drx, dry)`` from a relative transform.

    The rotation is split as ``R = Ry(dry) Rx(drx) Rz(drz)`` and the
    translation is taken back into the untilted motion plane before measuring
    the signed chord length, so a transform generated by the model is
    reproduced exactly.
    """
    R = X_rel[:3, :3]
    t = X_rel[:3, 3]
    drx = np.arctan2(-R[1, 2], np.hypot(R[0, 2], R[2, 2]))
    dry = np.arctan2(R[0, 2], R[2, 2])
    drz = np.arctan2(R[1, 0], R[1, 1])
    u = _planar_tilt(drx, dry).T @ t
    rho = np.hypot(u[0], u[1]) * (-1.0 if u[0] < 0.0 else 1.0)
    return float(rho), float(drz), float(drx), float(dry)


def ackermann_project(X_rel: np.ndarray) -> np.ndarray:
    """Closest motion obeying the tilted-plane Ackermann model, as ``(t, r)``."""
    rho, drz, drx, dry = ackermann_params(np.asarray(X_rel, dtype=float))
    return phi(tilt_transform(drx, dry) @ ackermann_transform(rho, drz))


def predict(kind: FactorKind, X_i: np.ndarray, X_j: Optional[np.ndarray] = None) -> np.ndarray:
    """Expected measurement ``z_hat`` for a factor of ``kind``."""
    kind = FactorKind(kind)
    out = np.zeros(6)
    if kind.binary:
        if X_j is None:
            raise ValueError(f"{kind.name} prediction needs both node states")
        if kind == FactorKind.MRF:
            out[2] = X_i[2, 3] - X_j[2, 3]
            return out
        rel = relative(X_i, X_j)
        if kind == FactorKind.AMM:
            return ackermann_project(rel)
        full = phi(rel)
        if kind == FactorKind.WO:
            out[[0, 1, 5]] = full[[0, 1, 5]]
            return out
        return full
    if kind == FactorKind.GPS:
        out[:3] = X_i[:3, 3]
    elif kind == FactorKind.DEM:
        out[2] = X_i[2, 3]
    elif kind == FactorKind.IMU:
        out[3:5] = roll_pitch_yaw(X_i[:3, :3])[:2]
    return out


def error(f: Factor, X_i: np.ndarray, X_j: Optional[np.ndarray] = None) -> np.ndarray:
    """Residual ``z [-] z_hat`` restricted to the factor's observable components.

    Translations subtract; full rotations use :func:`rot_diff` from the
    prediction to the measurement; single angles subtract with wrapping.
    For AMM the measurement is the current relative motion itself, so the
    residual is the off-model part of that motion.
    """
    kind = f.kind
    if kind == FactorKind.AMM:
        if X_j is None:
            raise ValueError("AMM error needs both node states")
        z = phi(relative(X_i, X_j))
    else:
        z = f.z
    zh = predict(kind, X_i, X_j)
    e = np.zeros(6)
    if kind in (FactorKind.VO, FactorKind.LID, FactorKind.AMM):
        e[:3] = z[:3] - zh[:3]
        e[3:] = rot_diff(zh[3:], z[3:])
    elif kind == FactorKind.WO:
        e[0:2] = z[0:2] - zh[0:2]
        e[5] = wrap_angle(z[5] - zh[5])
    elif kind == FactorKind.IMU:
        e[3:5] = wrap_angle(z[3:5] - zh[3:5])
    else:
        idx = list(ACTIVE[kind])
        e[idx] = z[idx] - zh[idx]
    return e


def weighted_error(f: Factor, X_i, X_j=None) -> float:
    e = error(f, X_i, X_j)
    return float(e @ f.info @ e)


# ---------------------------------------------------------------------------
# information matrices

def _inverse_pd(cov, name: str) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} covariance is not positive definite") from exc
    Linv = np.linalg.inv(L)
    info = Linv.T @ Linv
    return 0.5 * (info + info.T)


def _embed(block: np.ndarray, idx) -> np.ndarray:
    info = np.zeros((6, 6))
    info[np.ix_(idx, idx)] = block
    return info


def build_wo_info(sigma_wo, dist: float, rot: float) -> np.ndarray:
    """Per-unit-motion odometry covariance scaled by the motion between nodes."""
    if dist < 0 or rot < 0:
        raise ValueError("traveled distance and rotation must be non-negative")
    scale = max(dist + rot, EPS_SCALE)
    return _embed(_inverse_pd(np.asarray(sigma_wo) * scale, "WO"), ACTIVE[FactorKind.WO])


def build_vo_info(sigma_vo_t, sigma_vo_r, params: WeightParams = WeightParams()) -> np.ndarray:
    info = np.zeros((6, 6))
    info[:3, :3] = _inverse_pd(params.lambda_vo_t * np.asarray(sigma_vo_t), "VO translation")
    info[3:, 3:] = _inverse_pd(params.lambda_vo_r * np.asarray(sigma_vo_r), "VO rotation")
    return info


def build_amm_info(dist: float) -> np.ndarray:
    if dist < 0:
        raise ValueError("traveled distance must be non-negative")
    return np.eye(6) / max(dist, EPS_SCALE)


def mrf_weight(planar_dist: float, params: WeightParams = WeightParams()) -> float:
    return params.lambda_mrf / max(planar_dist, MRF_MIN_DIST)


def build_mrf_factor(node_i: int, node_j: int, est_i: Pose6D, est_j: Pose6D,
                     params: WeightParams = WeightParams()) -> Factor:
    d = float(np.hypot(*(est_i.t[:2] - est_j.t[:2])))
    info = np.zeros((6, 6))
    info[2, 2] = mrf_weight(d, params)
    return Factor(FactorKind.MRF, node_i, node_j, np.zeros(6), info)


def build_dem_factor(node_i: int, est_i: Pose6D, dem: DemGrid,
                     params: WeightParams = WeightParams()) -> Optional[Factor]:
    try:
        alt = dem_query(dem, est_i.t[0], est_i.t[1])
    except OutOfBounds:
        return None
    z = np.zeros(6)
    z[2] = alt
    info = np.zeros((6, 6))
    info[2, 2] = params.w_dem_z
    return Factor(FactorKind.DEM, node_i, None, z, info)


def build_gps_factor(node_i: int, position, cov) -> Factor:
    z = np.zeros(6)
    z[:3] = position
    return Factor(FactorKind.GPS, node_i, None, z, _embed(_inverse_pd(cov, "GPS"), [0, 1, 2]))


def build_imu_factor(node_i: int, roll_pitch, cov) -> Factor:
    z = np.zeros(6)
    z[3:5] = roll_pitch
    return Factor(FactorKind.IMU, node_i, None, z, _embed(_inverse_pd(cov, "IMU"), [3, 4]))


def build_lid_factor(node_i: int, node_j: int, delta, cov) -> Factor:
    return Factor(FactorKind.LID, node_i, node_j, delta, _inverse_pd(cov, "LID"))


def build_vo_factor(node_i: int, node_j: int, delta, cov,
                    params: WeightParams = WeightParams(), scale: float = 1.0) -> Factor:
    cov = np.asarray(cov, dtype=float)
    info = build_vo_info(cov[:3, :3], cov[3:, 3:], params) * scale
    return Factor(FactorKind.VO, node_i, node_j, delta, info)


def build_wo_factor(node_i: int, node_j: int, delta_xy_yaw, sigma_wo, dist, rot) -> Factor:
    z = np.zeros(6)
    z[[0, 1, 5]] = delta_xy_yaw
    return Factor(FactorKind.WO, node_i, node_j, z, build_wo_info(sigma_wo, dist, rot))


def build_amm_factor(node_i: int, node_j: int, X_i: np.ndarray, X_j: np.ndarray, dist: float) -> Factor:
    return Factor(FactorKind.AMM, node_i, node_j, phi(relative(X_i, X_j)), build_amm_info(dist))


def vo_failure_scale(wo_delta: Pose6D, vo_delta: Pose6D,
                     params: WeightParams = WeightParams()) -> float:
    """1 when WO and VO agree in the plane, ``vo_fail_scale`` otherwise."""
    gap = float(np.hypot(*(wo_delta.t[:2] - vo_delta.t[:2])))
    return 1.0 if gap <= params.vo_fail_threshold else params.vo_fail_scale


__all__ = [
    "FactorKind", "Factor", "WeightParams", "NotPositiveDefinite", "ALL_KINDS", "ACTIVE",
    "predict", "error", "weighted_error", "ackermann_project", "ackermann_params",
    "ackermann_transform", "tilt_transform", "build_wo_info", "build_vo_info",
    "build_amm_info", "build_mrf_factor", "build_dem_factor", "build_gps_factor",
    "build_imu_factor", "build_lid_factor", "build_vo_factor", "build_wo_factor",
    "build_amm_factor", "vo_failure_scale", "mrf_weight",
]
