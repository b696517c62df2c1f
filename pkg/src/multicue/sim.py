"""Synthetic crop-field runs: terrain, ground truth and noisy sensor streams.

The robot covers ``rows`` parallel crop rows laid along +x at
``y = row * row_spacing``.  Two steering patterns exist:

* ``SERPENTINE``: always driving forward, with half-circle headland turns.
* ``SAME_HEADING``: the heading stays near zero; rows are driven alternately
  forward and in reverse, joined by an S-shaped lateral shift in the headland
  that ends in a stop-and-reverse cusp.

Everything is sampled on one base clock (100 Hz by default) and every sensor
fires on a subset of that clock, so sensor stamps coincide with truth samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dem import DemGrid
from .geometry import roll_pitch_yaw, so3_exp, so3_log
from .sensorlog import SensorLog, Stream
from .trajectory import Trajectory

SIGMA_FLOOR = 1e-4


class SteeringMode(str, enum.Enum):
    SAME_HEADING = "SAME_HEADING"
    SERPENTINE = "SERPENTINE"


@dataclass(frozen=True)
class FieldConfig:
    rows: int = 6
    row_length: float = 30.0
    row_spacing: float = 1.5
    amplitude: float = 0.5
    wavelengths: tuple = (20.0, 35.0)
    slope: tuple = (0.01, 0.005)
    speed: float = 0.5
    turn_speed: float = 0.1
    accel: float = 0.05
    headland: float = 4.0
    mode: SteeringMode = SteeringMode.SERPENTINE
    seed: int = 0
    rate: int = 100
    dem_spacing: float = 5.0   # keeps the grid at a quarter of the shortest terrain wavelength

    def __post_init__(self):
        object.__setattr__(self, "mode", SteeringMode(self.mode))
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        object.__setattr__(self, "slope", tuple(float(s) for s in self.slope))
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        for name in ("row_length", "row_spacing", "speed", "turn_speed", "accel", "headland",
                     "dem_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if len(self.wavelengths) != 2 or min(self.wavelengths) <= 0:
            raise ValueError("wavelengths must be two positive lengths")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if int(self.rate) != self.rate or self.rate < 1:
            raise ValueError("rate must be a positive integer")


@dataclass(frozen=True)
class NoiseConfig:
    wo_sigma_t: float = 0.01       # m per sqrt(m)
    wo_sigma_yaw: float = 0.01     # rad per sqrt(m)
    vo_sigma_t: float = 0.02       # m per sqrt(m)
    vo_sigma_r: float = 0.005      # rad per sqrt(m)
    vo_fail_rate: float = 0.02     # episodes per second
    vo_fail_duration: float = 2.0  # s
    vo_fail_magnitude: float = 20.0
    lid_sigma_t: float = 0.02
    lid_sigma_r: float = 0.005
    rtk_sigma_xy: float = 0.05
    rtk_sigma_z: float = 0.1
    ppp_sigma_xy: float = 0.5
    ppp_sigma_z: float = 1.5
    imu_sigma: float = 0.01
    gps_mode: str = "RTK"
    outages: tuple = ()            # (t_start, t_end, mode)
    wo_rate: int = 20
    vo_rate: int = 10
    gps_rate: int = 5
    imu_rate: int = 50
    lid_step: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if name in ("gps_mode", "outages", "seed"):
                continue
            if val < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.gps_mode not in ("RTK", "PPP"):
            raise ValueError("gps_mode must be RTK or PPP")
        outs = tuple((float(a), float(b), str(m)) for a, b, m in self.outages)
        for a, b, m in outs:
            if not b > a or m not in ("RTK", "PPP"):
                raise ValueError(f"bad outage ({a}, {b}, {m})")
        object.__setattr__(self, "outages", outs)
        for name in ("wo_rate", "vo_rate", "gps_rate", "imu_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.lid_step > 0:
            raise ValueError("lid_step must be positive")

    @classmethod
    def noiseless(cls, **kw) -> "NoiseConfig":
        zero = {k: 0.0 for k in ("wo_sigma_t", "wo_sigma_yaw", "vo_sigma_t", "vo_sigma_r",
                                  "vo_fail_rate", "lid_sigma_t", "lid_sigma_r", "rtk_sigma_xy",
                                  "rtk_sigma_z", "ppp_sigma_xy", "ppp_sigma_z", "imu_sigma")}
        zero.update(kw)
        return cls(**zero)

    def gps_sigma(self, mode: str) -> tuple[float, float]:
        if mode == "RTK":
            return self.rtk_sigma_xy, self.rtk_sigma_z
        return self.ppp_sigma_xy, self.ppp_sigma_z


# ---------------------------------------------------------------------------
# terrain

def _phases(cfg: FieldConfig) -> np.ndarray:
    return np.random.default_rng([cfg.seed, 7]).uniform(0.0, 2.0 * np.pi, 2)


def terrain_height(cfg: FieldConfig, x, y):
    p = _phases(cfg)
    l1, l2 = cfg.wavelengths
    a = 0.5 * cfg.amplitude
    return (a * np.sin(2 * np.pi * np.asarray(x) / l1 + p[0])
            + a * np.sin(2 * np.pi * np.asarray(y) / l2 + p[1])
            + cfg.slope[0] * np.asarray(x) + cfg.slope[1] * np.asarray(y))


def terrain_gradient(cfg: FieldConfig, x, y) -> tuple[np.ndarray, np.ndarray]:
    p = _phases(cfg)
    l1, l2 = cfg.wavelengths
    a = 0.5 * cfg.amplitude
    gx = a * (2 * np.pi / l1) * np.cos(2 * np.pi * np.asarray(x) / l1 + p[0]) + cfg.slope[0]
    gy = a * (2 * np.pi / l2) * np.cos(2 * np.pi * np.asarray(y) / l2 + p[1]) + cfg.slope[1]
    return gx, gy


def field_extent(cfg: FieldConfig) -> tuple[float, float, float, float]:
    """Planar bounding box of every path the generator can produce."""
    m = max(cfg.headland, cfg.row_spacing)
    return (-m, cfg.row_length + m, -m, (cfg.rows - 1) * cfg.row_spacing + m)


def export_dem(cfg: FieldConfig, spacing: Optional[float] = None, margin: float = 2.0) -> DemGrid:
    """Sample the terrain on a regular grid covering the field plus ``margin``."""
    s = cfg.dem_spacing if spacing is None else float(spacing)
    xmin, xmax, ymin, ymax = field_extent(cfg)
    x0 = np.floor((xmin - margin) / s) * s
    y0 = np.floor((ymin - margin) / s) * s
    cols = int(np.ceil((xmax + margin - x0) / s)) + 1
    rows = int(np.ceil((ymax + margin - y0) / s)) + 1
    X, Y = np.meshgrid(x0 + s * np.arange(cols), y0 + s * np.arange(rows))
    return DemGrid((x0, y0), s, terrain_height(cfg, X, Y))


def surface_rotation(cfg: FieldConfig, x, y, yaw) -> np.ndarray:
    """Body frame with z along the terrain normal and x along the heading."""
    gx, gy = terrain_gradient(cfg, x, y)
    c, s = np.cos(yaw), np.sin(yaw)
    f = np.stack([c, s, gx * c + gy * s], axis=-1)
    n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
    f /= np.linalg.norm(f, axis=-1, keepdims=True)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    left = np.cross(n, f)
    return np.stack([f, left, n], axis=-1)


# ---------------------------------------------------------------------------
# planar path segments

class _Line:
    def __init__(self, p0, direction, yaw, row):
        self.p0 = np.asarray(p0, dtype=float)
        self.length = float(np.hypot(*direction))
        self.u = np.asarray(direction, dtype=float) / self.length
        self.yaw = yaw
        self.row = row

    def eval(self, s):
        xy = self.p0 + s[:, None] * self.u
        return xy, np.full(len(s), self.yaw)


class _Arc:
    def __init__(self, center, radius, theta0, turn, row=-1):
        self.c = np.asarray(center, dtype=float)
        self.r = radius
        self.theta0 = theta0
        self.turn = turn            # +1 left, -1 right
        self.length = np.pi * radius
        self.row = row

    def eval(self, s):
        th = self.theta0 + self.turn * s / self.r
        xy = self.c + self.r * np.stack([np.cos(th), np.sin(th)], axis=1)
        return xy, th + self.turn * 0.5 * np.pi


class _SCurve:
    """Quintic lateral shift ``dy`` over a run ``dx``; heading follows the tangent line."""

    def __init__(self, p0, dx, dy, row=-1, n=20001):
        self.p0 = np.asarray(p0, dtype=float)
        self.dx, self.dy = dx, dy
        self.row = row
        xi = np.linspace(0.0, 1.0, n)
        speed = np.hypot(dx, dy * self._dq(xi))
        self.s_tab = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(xi))])
        self.xi_tab = xi
        self.length = float(self.s_tab[-1])

    @staticmethod
    def _q(xi):
        return xi ** 3 * (10 - 15 * xi + 6 * xi ** 2)

    @staticmethod
    def _dq(xi):
        return 30 * xi ** 2 * (1 - xi) ** 2

    def eval(self, s):
        xi = np.interp(s, self.s_tab, self.xi_tab)
        xy = self.p0 + np.stack([xi * self.dx, self._q(xi) * self.dy], axis=1)
        return xy, np.arctan(self._dq(xi) * self.dy / self.dx)


@dataclass
class _Profile:
    """Trapezoidal speed plan over one segment."""

    length: float
    v_in: float
    v_cruise: float
    v_out: float
    accel: float

    def __post_init__(self):
        a, L = self.accel, self.length
        vc = self.v_cruise
        d1 = abs(vc ** 2 - self.v_in ** 2) / (2 * a)
        d3 = abs(vc ** 2 - self.v_out ** 2) / (2 * a)
        if d1 + d3 > L:
            vc = np.sqrt(a * L + 0.5 * (self.v_in ** 2 + self.v_out ** 2))
            d1 = abs(vc ** 2 - self.v_in ** 2) / (2 * a)
            d3 = abs(vc ** 2 - self.v_out ** 2) / (2 * a)
        self.vc = vc
        self.a1 = np.sign(vc - self.v_in) * a
        self.a3 = np.sign(self.v_out - vc) * a
        self.t1 = (vc - self.v_in) / self.a1 if self.a1 else 0.0
        self.d1 = d1
        self.t2 = (L - d1 - d3) / vc
        self.t3 = (self.v_out - vc) / self.a3 if self.a3 else 0.0
        self.duration = self.t1 + self.t2 + self.t3

    def distance(self, tau):
        tau = np.clip(tau, 0.0, self.duration)
        s1 = self.v_in * np.minimum(tau, self.t1) + 0.5 * self.a1 * np.minimum(tau, self.t1) ** 2
        tc = np.clip(tau - self.t1, 0.0, self.t2)
        td = np.clip(tau - self.t1 - self.t2, 0.0, self.t3)
        s = s1 + self.vc * tc + self.vc * td + 0.5 * self.a3 * td ** 2
        return np.minimum(s, self.length)


def _plan(cfg: FieldConfig):
    """Segments with their speed profiles, in driving order."""
    L, sp, H = cfg.row_length, cfg.row_spacing, cfg.headland
    v, vt, a = cfg.speed, cfg.turn_speed, cfg.accel
    plan = []
    if cfg.mode == SteeringMode.SERPENTINE:
        for r in range(cfg.rows):
            fwd = r % 2 == 0
            y = r * sp
            start = (0.0, y) if fwd else (L, y)
            line = _Line(start, (L if fwd else -L, 0.0), 0.0 if fwd else np.pi, r)
            last = r == cfg.rows - 1
            plan.append((line, _Profile(line.length, 0.0 if r == 0 else vt, v, 0.0 if last else vt, a)))
            if not last:
                if fwd:
                    arc = _Arc((L, y + 0.5 * sp), 0.5 * sp, -0.5 * np.pi, +1)
                else:
                    arc = _Arc((0.0, y + 0.5 * sp), 0.5 * sp, -0.5 * np.pi, -1)
                plan.append((arc, _Profile(arc.length, vt, vt, vt, a)))
    else:
        x = 0.0
        for r in range(cfg.rows):
            fwd = r % 2 == 0
            y = r * sp
            end = L if fwd else 0.0
            line = _Line((x, y), (end - x, 0.0), 0.0, r)
            last = r == cfg.rows - 1
            plan.append((line, _Profile(line.length, 0.0, v, 0.0 if last else vt, a)))
            if not last:
                dx = H if fwd else -H
                sc = _SCurve((end, y), dx, sp)
                plan.append((sc, _Profile(sc.length, vt, vt, 0.0, a)))
                x = end + dx
    return plan


def generate_truth(cfg: FieldConfig) -> Trajectory:
    """Ground-truth poses on the base clock, with the crop-row index (-1 off-row)."""
    plan = _plan(cfg)
    durations = np.array([p.duration for _, p in plan])
    starts = np.concatenate([[0.0], np.cumsum(durations)])
    n = int(np.floor(starts[-1] * cfg.rate + 1e-9)) + 1
    stamps = np.arange(n) / cfg.rate
    seg = np.clip(np.searchsorted(starts, stamps, side="right") - 1, 0, len(plan) - 1)
    xy = np.zeros((n, 2))
    yaw = np.zeros(n)
    rows = np.full(n, -1, dtype=int)
    for k, (geom, prof) in enumerate(plan):
        m = seg == k
        if not np.any(m):
            continue
        s = prof.distance(stamps[m] - starts[k])
        xy[m], yaw[m] = geom.eval(s)
        rows[m] = geom.row
    # row hints only inside the cropped span
    off = (xy[:, 0] < -1e-9) | (xy[:, 0] > cfg.row_length + 1e-9)
    rows[off] = -1
    z = terrain_height(cfg, xy[:, 0], xy[:, 1])
    R = surface_rotation(cfg, xy[:, 0], xy[:, 1], yaw)
    pos = np.column_stack([xy, z])
    return Trajectory(stamps, pos, roll_pitch_yaw(R), rows)


# ---------------------------------------------------------------------------
# sensors

def _every(truth: Trajectory, base_rate: int, rate: int) -> np.ndarray:
    step = base_rate / rate
    if abs(step - round(step)) > 1e-9:
        raise ValueError(f"sensor rate {rate} Hz does not divide the {base_rate} Hz base clock")
    return np.arange(0, len(truth), int(round(step)))


def _base_rate(truth: Trajectory) -> int:
    dt = np.diff(truth.stamps)
    return int(round(1.0 / float(np.median(dt))))


def _rel(R, p, k0, k1):
    """Relative motion of truth sample ``k1`` seen from ``k0``: ``(t, R)``."""
    R0t = np.swapaxes(R[k0], -1, -2)
    return np.einsum("...ij,...j->...i", R0t, p[k1] - p[k0]), R0t @ R[k1]


def _episodes(rng, t_end: float, rate: float, duration: float) -> list:
    out = []
    if rate <= 0:
        return out
    t = rng.exponential(1.0 / rate)
    while t < t_end:
        out.append((t, t + duration))
        t += duration + rng.exponential(1.0 / rate)
    return out


def _in_any(t, spans) -> np.ndarray:
    m = np.zeros(len(t), dtype=bool)
    for a, b in spans:
        m |= (t >= a) & (t < b)
    return m


def gps_modes(noise: NoiseConfig, stamps) -> list:
    modes = np.full(len(stamps), noise.gps_mode, dtype=object)
    for a, b, mode in noise.outages:
        modes[(stamps >= a) & (stamps < b)] = mode
    return list(modes)


def lid_stamps(wo: Stream, step: float) -> np.ndarray:
    """Readings where accumulated WO travel reaches ``step`` (the node trigger rule)."""
    from .pipeline import trigger_stamps
    return trigger_stamps(wo, step)


def simulate_sensors(truth: Trajectory, noise: NoiseConfig = NoiseConfig()) -> SensorLog:
    """Noisy sensor streams for ``truth``; deterministic given ``noise.seed``.

    Reported covariances are the true noise covariances plus a tiny variance
    floor that keeps them invertible for noiseless runs.  During VO failure
    episodes the VO noise is scaled up while the reported covariance stays
    nominal.
    """
    base = _base_rate(truth)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(noise.seed).spawn(6)]
    R = truth.rotations()
    p = truth.positions
    floor2 = SIGMA_FLOOR ** 2

    # wheel odometry: planar part of each consecutive motion
    k = _every(truth, base, noise.wo_rate)
    t_rel, R_rel = _rel(R, p, np.r_[k[0], k[:-1]], k)
    dyaw = so3_log(R_rel)[:, 2]
    d = np.hypot(t_rel[:, 0], t_rel[:, 1])
    scale = np.maximum(d + np.abs(dyaw), 1e-4)
    sig = np.array([noise.wo_sigma_t, noise.wo_sigma_t, noise.wo_sigma_yaw])
    vals = np.column_stack([t_rel[:, 0], t_rel[:, 1], dyaw])
    vals += rngs[0].standard_normal(vals.shape) * sig * np.sqrt(scale)[:, None]
    covs = np.einsum("n,ij->nij", scale, np.diag(sig ** 2)) + floor2 * np.eye(3)
    wo = Stream(truth.stamps[k], vals, covs)

    # visual odometry with failure episodes
    k = _every(truth, base, noise.vo_rate)
    t_rel, R_rel = _rel(R, p, np.r_[k[0], k[:-1]], k)
    d = np.maximum(np.linalg.norm(t_rel, axis=1), 1e-4)
    sig = np.array([noise.vo_sigma_t] * 3 + [noise.vo_sigma_r] * 3)
    fails = _episodes(rngs[1], truth.stamps[-1], noise.vo_fail_rate, noise.vo_fail_duration)
    boost = np.where(_in_any(truth.stamps[k], fails), noise.vo_fail_magnitude, 1.0)
    n6 = rngs[2].standard_normal((len(k), 6)) * sig * (np.sqrt(d) * boost)[:, None]
    vals = np.column_stack([t_rel + n6[:, :3], so3_log(R_rel @ so3_exp(n6[:, 3:]))])
    covs = np.einsum("n,ij->nij", d, np.diag(sig ** 2)) + floor2 * np.eye(6)
    vo = Stream(truth.stamps[k], vals, covs)

    # LIDAR registration, accumulated between node triggers
    ts = lid_stamps(wo, noise.lid_step)
    k = np.searchsorted(truth.stamps, ts)
    t_rel, R_rel = _rel(R, p, np.r_[k[0], k[:-1]], k)
    sig = np.array([noise.lid_sigma_t] * 3 + [noise.lid_sigma_r] * 3)
    n6 = rngs[3].standard_normal((len(k), 6)) * sig
    vals = np.column_stack([t_rel + n6[:, :3], so3_log(R_rel @ so3_exp(n6[:, 3:]))])
    covs = np.broadcast_to(np.diag(sig ** 2) + floor2 * np.eye(6), (len(k), 6, 6))
    lid = Stream(truth.stamps[k], vals, covs)

    # GPS with mode schedule
    k = _every(truth, base, noise.gps_rate)
    modes = gps_modes(noise, truth.stamps[k])
    sxy, sz = np.array([noise.gps_sigma(m) for m in modes]).reshape(-1, 2).T
    sig = np.column_stack([sxy, sxy, sz])
    vals = p[k] + rngs[4].standard_normal((len(k), 3)) * sig
    covs = np.einsum("ni,ij->nij", sig ** 2, np.eye(3)) + floor2 * np.eye(3)
    gps = Stream(truth.stamps[k], vals, covs, modes)

    # IMU roll and pitch
    k = _every(truth, base, noise.imu_rate)
    vals = truth.rpy[k, :2] + rngs[5].standard_normal((len(k), 2)) * noise.imu_sigma
    covs = np.broadcast_to((noise.imu_sigma ** 2 + floor2) * np.eye(2), (len(k), 2, 2))
    imu = Stream(truth.stamps[k], vals, covs)
    return SensorLog(wo, vo, lid, gps, imu)


def simulate(field_cfg: FieldConfig = FieldConfig(), noise: NoiseConfig = NoiseConfig()):
    """``(truth, log, dem)`` for one synthetic run."""
    truth = generate_truth(field_cfg)
    return truth, simulate_sensors(truth, noise), export_dem(field_cfg)


def outage_over_row(cfg: FieldConfig, truth: Trajectory, row: int, mode: str = "PPP",
                    pad: float = 2.0) -> tuple:
    """Outage window spanning the whole of crop row ``row`` plus ``pad`` seconds each side."""
    t = truth.stamps[truth.row_hints == row]
    if len(t) == 0:
        raise ValueError(f"row {row} is never traversed")
    return (max(0.0, float(t[0]) - pad), float(t[-1]) + pad, mode)
