"""Rigid-body algebra for the pose graph.

States are 6-vectors ``(tx, ty, tz, rx, ry, rz)``: a translation in meters and
an axis-angle rotation in radians.  Transforms are plain 4x4 homogeneous
``numpy`` arrays.  The SO(3) maps accept arbitrary leading batch dimensions so
the pure-Python kernel can reuse them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-8


@dataclass(frozen=True)
class Pose6D:
    """Translation ``t`` (m) plus axis-angle rotation ``r`` (rad)."""

    t: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(3)
        r = np.array(self.r, dtype=float).reshape(3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    @classmethod
    def from_vector(cls, v) -> "Pose6D":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    @classmethod
    def identity(cls) -> "Pose6D":
        return cls(np.zeros(3), np.zeros(3))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.t, self.r])

    def normalized(self) -> "Pose6D":
        """Same pose with the rotation wrapped to its minimal representative."""
        return Pose6D(self.t, so3_log(so3_exp(self.r)))


def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def so3_exp(r: np.ndarray) -> np.ndarray:
    """Rodrigues' formula, batched over leading dimensions."""
    r = np.asarray(r, dtype=float)
    theta2 = np.sum(r * r, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    K = skew(r)
    eye = np.broadcast_to(np.eye(3), K.shape)
    outer = r[..., :, None] * r[..., None, :]
    return (eye * (1.0 - b * theta2)[..., None, None]
            + b[..., None, None] * outer
            + a[..., None, None] * K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Minimal axis-angle of a rotation matrix (norm in [0, pi]).

    The angle comes from ``atan2(sin, cos)`` so it stays accurate close to pi;
    there the axis is read from the symmetric part instead of the
    antisymmetric one.  At exactly pi the axis sign is chosen so that the first
    nonzero component is positive.
    """
    R = np.asarray(R, dtype=float)
    v = np.stack([R[..., 2, 1] - R[..., 1, 2],
                  R[..., 0, 2] - R[..., 2, 0],
                  R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    c = np.clip(0.5 * (R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2] - 1.0), -1.0, 1.0)
    s = 0.5 * np.linalg.norm(v, axis=-1)
    theta = np.arctan2(s, c)

    # regular branch, valid for theta < pi/2
    small = theta < SMALL_ANGLE
    safe_s = np.where(small | (s == 0.0), 1.0, s)
    fac = np.where(small, 0.5 * (1.0 + theta * theta / 6.0), theta / (2.0 * safe_s))
    out = fac[..., None] * v

    wide = c <= 0.0
    if np.any(wide):
        sym = 0.5 * (R + np.swapaxes(R, -1, -2))
        denom = np.where(wide, 1.0 - c, 1.0)
        aat = (sym - c[..., None, None] * np.eye(3)) / denom[..., None, None]
        diag = np.diagonal(aat, axis1=-2, axis2=-1)
        k = np.argmax(diag, axis=-1)
        col = np.take_along_axis(aat, k[..., None, None].repeat(3, axis=-1), axis=-2)[..., 0, :]
        pivot = np.sqrt(np.maximum(np.take_along_axis(diag, k[..., None], axis=-1)[..., 0], 1e-300))
        axis = col / pivot[..., None]
        axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
        d = np.sum(axis * v, axis=-1)
        sign = np.where(d < 0.0, -1.0, 1.0)
        # exact pi: canonical representative
        tie = np.abs(d) <= 1e-12   # sin(pi) is only zero to rounding
        if np.any(tie):
            nz = np.abs(axis) > 1e-12
            first = np.argmax(nz, axis=-1)
            lead = np.take_along_axis(axis, first[..., None], axis=-1)[..., 0]
            sign = np.where(tie, np.where(lead < 0.0, -1.0, 1.0), sign)
        wide_out = (sign * theta)[..., None] * axis
        out = np.where(wide[..., None], wide_out, out)
    return out


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def to_transform(p: Pose6D) -> np.ndarray:
    X = np.eye(4)
    X[:3, :3] = so3_exp(p.r)
    X[:3, 3] = p.t
    return X


def phi(X: np.ndarray) -> np.ndarray:
    """Map a homogeneous transform to ``(t, r)``."""
    X = np.asarray(X, dtype=float)
    return np.concatenate([X[:3, 3], so3_log(X[:3, :3])])


def compose(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.asarray(A, dtype=float) @ np.asarray(B, dtype=float)


def invert(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    out = np.eye(4)
    Rt = A[:3, :3].T
    out[:3, :3] = Rt
    out[:3, 3] = -Rt @ A[:3, 3]
    return out


def relative(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``inv(A) @ B``: pose of ``B`` expressed in the frame of ``A``."""
    return compose(invert(A), B)


def interp_pose(a: Pose6D, b: Pose6D, alpha: float) -> Pose6D:
    """Linear in translation, geodesic in rotation."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a
    if alpha == 1.0:
        return b
    t = (1.0 - alpha) * a.t + alpha * b.t
    Ra = so3_exp(a.r)
    delta = so3_log(Ra.T @ so3_exp(b.r))
    r = so3_log(Ra @ so3_exp(alpha * delta))
    return Pose6D(t, r)


def rot_diff(r_a, r_b) -> np.ndarray:
    """Axis-angle of ``R_a^T R_b``; zero iff the rotations coincide."""
    return so3_log(np.swapaxes(so3_exp(r_a), -1, -2) @ so3_exp(r_b))


def roll_pitch_yaw(R: np.ndarray) -> np.ndarray:
    """Z-Y-X Euler angles ``(roll, pitch, yaw)`` with ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
    R = np.asarray(R, dtype=float)
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    pitch = np.arctan2(-R[..., 2, 0], np.hypot(R[..., 2, 1], R[..., 2, 2]))
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    return np.stack([roll, pitch, yaw], axis=-1)


def rotation_from_rpy(rpy) -> np.ndarray:
    rpy = np.asarray(rpy, dtype=float)
    cr, sr = np.cos(rpy[..., 0]), np.sin(rpy[..., 0])
    cp, sp = np.cos(rpy[..., 1]), np.sin(rpy[..., 1])
    cy, sy = np.cos(rpy[..., 2]), np.sin(rpy[..., 2])
    R = np.empty(rpy.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def pose_from_rpy(position, rpy) -> Pose6D:
    return Pose6D(position, so3_log(rotation_from_rpy(rpy)))


def states_to_transforms(states: np.ndarray) -> np.ndarray:
    """``(N, 6)`` state rows to ``(N, 4, 4)`` transforms."""
    states = np.asarray(states, dtype=float)
    X = np.zeros(states.shape[:-1] + (4, 4))
    X[..., :3, :3] = so3_exp(states[..., 3:])
    X[..., :3, 3] = states[..., :3]
    X[..., 3, 3] = 1.0
    return X


def retract(state: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Manifold update: additive translation, right-composed rotation increment.

    Works row-wise on ``(N, 6)`` arrays as well as on single states.
    """
    state = np.asarray(state, dtype=float)
    delta = np.asarray(delta, dtype=float)
    out = np.empty(np.broadcast_shapes(state.shape, delta.shape))
    out[..., :3] = state[..., :3] + delta[..., :3]
    out[..., 3:] = so3_log(so3_exp(state[..., 3:]) @ so3_exp(delta[..., 3:]))
    return out
