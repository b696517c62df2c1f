"""From sensor streams to an optimized trajectory.

Nodes are triggered by wheel-odometry travel.  At every node stamp the
streams are synchronized by interpolation and one factor per enabled cue is
built.  Relative sensors are handled through their integrated odometry:
each relative stream is chained into a cumulative pose track, and the
motion between two nodes is the relative pose between the interpolated
track poses.  The covariance of that motion is the sum of the covariances of
the readings it spans.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dem import DemGrid
from .factors import (ALL_KINDS, Factor, FactorKind, WeightParams, build_amm_factor,
                      build_dem_factor, build_gps_factor, build_imu_factor, build_lid_factor,
                      build_mrf_factor, build_vo_factor, build_wo_factor, vo_failure_scale)
from .geometry import (Pose6D, interp_pose, invert, phi, pose_from_rpy, so3_exp, to_transform,
                       wrap_angle)
from .graph import PoseGraph, cross_row_neighbors
from .sensorlog import SensorLog, Stream
from .solver import SolveReport, SolverConfig, lm_optimize
from .trajectory import Trajectory

log = logging.getLogger(__name__)

EPS_MOTION = 1e-4


@dataclass(frozen=True)
class PipelineConfig:
    step_wo: float = 0.3
    window: bool = True
    w_min: int = 20
    row_spacing: float = 1.5
    mrf_radius: Optional[float] = None
    mrf_exclude: int = 5
    cues: frozenset = ALL_KINDS
    weights: WeightParams = WeightParams()
    solver: SolverConfig = SolverConfig()
    refresh_passes: int = 1
    anchor: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "cues", frozenset(FactorKind(k) for k in self.cues))
        if not self.step_wo > 0:
            raise ValueError("step_wo must be positive")
        if self.w_min < 1:
            raise ValueError("w_min must be >= 1")
        if not self.row_spacing > 0:
            raise ValueError("row_spacing must be positive")
        if self.refresh_passes < 0:
            raise ValueError("refresh_passes must be >= 0")
        if self.anchor not in ("auto", "first", "none"):
            raise ValueError("anchor must be auto, first or none")


# ---------------------------------------------------------------------------
# node triggering

def trigger_stamps(wo: Stream, step: float) -> np.ndarray:
    """Stamps where planar WO travel since the last trigger reaches ``step``."""
    if len(wo) == 0:
        raise ValueError("node triggering needs a non-empty WO stream")
    d = np.hypot(wo.values[:, 0], wo.values[:, 1])
    out = [wo.stamps[0]]
    acc = 0.0
    for k in range(1, len(wo)):
        acc += d[k]
        if acc >= step - 1e-9:
            out.append(wo.stamps[k])
            acc = 0.0
    return np.array(out)


def trigger_nodes(slog: SensorLog, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    return trigger_stamps(slog.wo, cfg.step_wo)


# ---------------------------------------------------------------------------
# synchronization

@dataclass
class PlanarOdom:
    """Integrated WO at one stamp: pose ``(x, y, yaw)``, cumulative travel,
    turn and covariance."""

    pose: np.ndarray
    travel: float
    turn: float
    cum_cov: np.ndarray
    cov: np.ndarray


@dataclass
class SpatialOdom:
    """Integrated VO or LID at one stamp."""

    X: np.ndarray
    cum_cov: np.ndarray
    cov: np.ndarray


@dataclass
class Readings:
    stamp: float
    wo: Optional[PlanarOdom] = None
    vo: Optional[SpatialOdom] = None
    lid: Optional[SpatialOdom] = None
    gps: Optional[tuple] = None     # (position, cov, mode)
    imu: Optional[tuple] = None     # (roll_pitch, cov)


def _cum_cov(st: Stream) -> np.ndarray:
    c = np.cumsum(st.covs, axis=0)
    return c - st.covs[0]           # the first reading's motion precedes the stream


class LogIndex:
    """Integrated tracks of a :class:`SensorLog`, ready for stamp queries."""

    def __init__(self, slog: SensorLog):
        self.log = slog
        wo = slog.wo
        if len(wo):
            pose = np.zeros((len(wo), 3))
            for k in range(1, len(wo)):
                x, y, th = pose[k - 1]
                dx, dy, dth = wo.values[k]
                c, s = np.cos(th), np.sin(th)
                pose[k] = (x + c * dx - s * dy, y + s * dx + c * dy, th + dth)
            d = np.hypot(wo.values[:, 0], wo.values[:, 1])
            d[0] = 0.0
            turn = np.abs(wo.values[:, 2])
            turn[0] = 0.0
            self._wo = (pose, np.cumsum(d), np.cumsum(turn), _cum_cov(wo))
        self._vo = self._chain(slog.vo)
        self._lid = self._chain(slog.lid)

    @staticmethod
    def _chain(st: Stream):
        if len(st) == 0:
            return None
        X = np.empty((len(st), 4, 4))
        X[0] = np.eye(4)
        R = so3_exp(st.values[:, 3:])
        for k in range(1, len(st)):
            D = np.eye(4)
            D[:3, :3] = R[k]
            D[:3, 3] = st.values[k, :3]
            X[k] = X[k - 1] @ D
        states = np.array([phi(x) for x in X])
        return states, _cum_cov(st)

    @staticmethod
    def _lerp(arr, k0, k1, a):
        return arr[k0] if k0 == k1 or a == 0.0 else (1 - a) * arr[k0] + a * arr[k1]

    def _spatial(self, st: Stream, track, stamp) -> Optional[SpatialOdom]:
        if track is None or not st.covers(stamp):
            return None
        states, cum = track
        k0, k1, a = st.bracket(stamp)
        p = Pose6D.from_vector(states[k0])
        if k0 != k1 and a > 0.0:
            p = interp_pose(p, Pose6D.from_vector(states[k1]), a)
        return SpatialOdom(to_transform(p), self._lerp(cum, k0, k1, a), st.covs[st.nearest(stamp)])

    def at(self, stamp: float) -> Readings:
        slog = self.log
        out = Readings(float(stamp))
        wo = slog.wo
        if len(wo) and wo.covers(stamp):
            pose, travel, turn, cum = self._wo
            k0, k1, a = wo.bracket(stamp)
            if k0 == k1 or a == 0.0:
                p = pose[k0].copy()
            else:
                p = (1 - a) * pose[k0] + a * pose[k1]
            out.wo = PlanarOdom(p, float(self._lerp(travel, k0, k1, a)), float(self._lerp(turn, k0, k1, a)),
                                self._lerp(cum, k0, k1, a), wo.covs[wo.nearest(stamp)])
        out.vo = self._spatial(slog.vo, self._vo, stamp)
        out.lid = self._spatial(slog.lid, self._lid, stamp)
        g = slog.gps
        if g.covers(stamp):
            k0, k1, a = g.bracket(stamp)
            kn = g.nearest(stamp)
            out.gps = (self._lerp(g.values, k0, k1, a), g.covs[kn], g.modes[kn])
        m = slog.imu
        if m.covers(stamp):
            k0, k1, a = m.bracket(stamp)
            rp = m.values[k0] if k0 == k1 or a == 0.0 else \
                m.values[k0] + a * wrap_angle(m.values[k1] - m.values[k0])
            out.imu = (rp, m.covs[m.nearest(stamp)])
        return out


def synchronize(slog: SensorLog, stamp: float) -> Readings:
    """Readings of every sensor at ``stamp``; sensors not spanning it are None."""
    return LogIndex(slog).at(stamp)


# ---------------------------------------------------------------------------
# factor assembly

def planar_delta(a: PlanarOdom, b: PlanarOdom) -> np.ndarray:
    """``(dx, dy, dyaw)`` of ``b`` in the frame of ``a``."""
    c, s = np.cos(a.pose[2]), np.sin(a.pose[2])
    dx, dy = b.pose[:2] - a.pose[:2]
    return np.array([c * dx + s * dy, -s * dx + c * dy, b.pose[2] - a.pose[2]])


def planar_transform(delta) -> np.ndarray:
    c, s = np.cos(delta[2]), np.sin(delta[2])
    return np.array([[c, -s, 0, delta[0]], [s, c, 0, delta[1]], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def _psd(cov, dim):
    cov = 0.5 * (cov + cov.T)
    # guard against an interval shorter than one reading's rounding
    return cov + 1e-12 * np.eye(dim)


@dataclass
class _Ctx:
    cfg: PipelineConfig
    dem: Optional[DemGrid]


def initial_state(readings: Readings) -> Pose6D:
    """First node: GPS position and IMU roll/pitch with zero yaw."""
    pos = readings.gps[0] if readings.gps is not None else np.zeros(3)
    rp = readings.imu[0] if readings.imu is not None else np.zeros(2)
    return pose_from_rpy(pos, [rp[0], rp[1], 0.0])


def dead_reckon(prev: Pose6D, a: Optional[Readings], b: Readings) -> Pose6D:
    """Previous state advanced by the WO motion between the two stamps."""
    if a is None or a.wo is None or b.wo is None:
        return prev
    X = to_transform(prev) @ planar_transform(planar_delta(a.wo, b.wo))
    return Pose6D.from_vector(phi(X))


def _mrf(g: PoseGraph, i: int, j: int, cfg: PipelineConfig) -> Factor:
    return build_mrf_factor(i, j, g.state(i), g.state(j), cfg.weights)


def assemble_node(g: PoseGraph, node: int, readings: Readings, prev: Optional[Readings],
                  cfg: PipelineConfig = PipelineConfig(), dem: Optional[DemGrid] = None) -> list:
    """Build and insert the factors of ``node``; returns the factors added.

    ``prev`` holds the readings of node ``node - 1`` (None for the first node).
    Binary factors link ``node - 1`` to ``node``.  Cross-row adjacency is
    recorded on the graph even when MRF factors are disabled, because the
    sliding window uses it.
    """
    cues = cfg.cues
    out = []
    i, j = node - 1, node
    wo_delta = None
    travel = None
    if prev is not None:
        if prev.wo is not None and readings.wo is not None:
            wo_delta = planar_delta(prev.wo, readings.wo)
            travel = readings.wo.travel - prev.wo.travel
            turn = readings.wo.turn - prev.wo.turn
            if FactorKind.WO in cues:
                scale = max(travel + turn, EPS_MOTION)
                unit = _psd(readings.wo.cum_cov - prev.wo.cum_cov, 3) / scale
                out.append(build_wo_factor(i, j, [wo_delta[0], wo_delta[1], wrap_angle(wo_delta[2])],
                                           unit, travel, turn))
        if FactorKind.VO in cues and prev.vo is not None and readings.vo is not None:
            D = invert(prev.vo.X) @ readings.vo.X
            cov = _psd(readings.vo.cum_cov - prev.vo.cum_cov, 6)
            scale = 1.0
            if wo_delta is not None:
                wo_pose = Pose6D([wo_delta[0], wo_delta[1], 0.0], [0.0, 0.0, wo_delta[2]])
                scale = vo_failure_scale(wo_pose, Pose6D.from_vector(phi(D)), cfg.weights)
            out.append(build_vo_factor(i, j, phi(D), cov, cfg.weights, scale))
        if FactorKind.LID in cues and prev.lid is not None and readings.lid is not None:
            D = invert(prev.lid.X) @ readings.lid.X
            out.append(build_lid_factor(i, j, phi(D), _psd(readings.lid.cum_cov - prev.lid.cum_cov, 6)))
        if FactorKind.AMM in cues:
            dist = travel if travel is not None else float(np.linalg.norm(g.states[j, :3] - g.states[i, :3]))
            out.append(build_amm_factor(i, j, g.transform(i), g.transform(j), dist))
    if FactorKind.GPS in cues and readings.gps is not None:
        out.append(build_gps_factor(j, readings.gps[0], readings.gps[1]))
    if FactorKind.IMU in cues and readings.imu is not None:
        out.append(build_imu_factor(j, readings.imu[0], readings.imu[1]))
    if FactorKind.DEM in cues and dem is not None:
        f = build_dem_factor(j, g.state(j), dem, cfg.weights)
        if f is not None:
            out.append(f)
    neigh = cross_row_neighbors(g, j, cfg.row_spacing, cfg.mrf_radius, cfg.mrf_exclude,
                                candidates=np.arange(j))
    for k in neigh:
        g.link_rows(j, k)
    if FactorKind.MRF in cues:
        if j > 0:
            out.append(_mrf(g, i, j, cfg))
        out.extend(_mrf(g, k, j, cfg) for k in neigh)
    return g.add_factors(out)


def refresh_factors(g: PoseGraph, cfg: PipelineConfig, dem: Optional[DemGrid] = None) -> None:
    """Rebuild the estimate-dependent factors (DEM and MRF) at the current states."""
    g.remove_kinds([FactorKind.DEM, FactorKind.MRF])
    n = len(g)
    g.row_links.clear()
    for j in range(n):
        for k in cross_row_neighbors(g, j, cfg.row_spacing, cfg.mrf_radius, cfg.mrf_exclude):
            g.link_rows(j, k)
    fs = []
    if FactorKind.DEM in cfg.cues and dem is not None:
        for j in range(n):
            f = build_dem_factor(j, g.state(j), dem, cfg.weights)
            if f is not None:
                fs.append(f)
    if FactorKind.MRF in cfg.cues:
        for j in range(1, n):
            fs.append(_mrf(g, j - 1, j, cfg))
        for j in range(n):
            fs.extend(_mrf(g, k, j, cfg) for k in sorted(g.row_links.get(j, ())) if k < j)
    g.add_factors(fs)


# ---------------------------------------------------------------------------
# windows and drivers

def window_extent(g: PoseGraph, newest: int, w_min: int = 20) -> range:
    """Contiguous ids ``[k, newest]`` covering the last ``w_min`` nodes and
    every earlier node they are row-adjacent to."""
    if not 0 <= newest < len(g):
        raise IndexError(f"no node {newest}")
    k0 = max(0, newest - w_min + 1)
    k = k0
    for i in range(k0, newest + 1):
        for j in g.row_links.get(i, ()):
            if j < k:
                k = j
    return range(k, newest + 1)


@dataclass
class RunResult:
    trajectory: Trajectory
    graph: PoseGraph
    reports: list = field(default_factory=list)

    @property
    def report(self) -> SolveReport:
        return self.reports[-1]


class SolveError(RuntimeError):
    def __init__(self, node: int, cause: Exception):
        super().__init__(f"optimization failed at node {node}: {cause}")
        self.node = node
        self.cause = cause


def _hint(hints: Optional[Trajectory], stamp: float) -> Optional[int]:
    return None if hints is None else hints.hint_at(stamp)


def _has_gps(g: PoseGraph) -> bool:
    return bool(np.any(g.packed()[0] == int(FactorKind.GPS)))


def _anchor(g: PoseGraph, cfg: PipelineConfig) -> None:
    if cfg.anchor == "first" or (cfg.anchor == "auto" and not _has_gps(g)):
        g.frozen_below = max(g.frozen_below, 1)


def _trajectory(g: PoseGraph) -> Trajectory:
    hints = [-1 if h is None else h for h in g.row_hints]
    return Trajectory.from_states(g.stamps, g.states, None if all(h < 0 for h in hints) else hints)


def run_online(slog: SensorLog, cfg: PipelineConfig = PipelineConfig(), dem: Optional[DemGrid] = None,
               hints: Optional[Trajectory] = None) -> RunResult:
    """Incremental estimation: one windowed optimization per new node.

    Nodes older than the window keep the state of their last optimization.
    With ``cfg.window`` off every step optimizes the whole graph.
    """
    idx = LogIndex(slog)
    g = PoseGraph()
    reports = []
    prev = None
    for k, stamp in enumerate(trigger_nodes(slog, cfg)):
        r = idx.at(stamp)
        init = initial_state(r) if k == 0 else dead_reckon(g.state(k - 1), prev, r)
        g.add_node(stamp, init, _hint(hints, stamp))
        assemble_node(g, k, r, prev, cfg, dem)
        prev = r
        win = window_extent(g, k, cfg.w_min) if cfg.window else range(0, k + 1)
        g.frozen_below = win.start
        if win.start == 0:
            _anchor(g, cfg)
        try:
            reports.append(lm_optimize(g, win, cfg.solver))
        except Exception as exc:   # noqa: BLE001 - rethrown with the node id
            raise SolveError(k, exc) from exc
    g.frozen_below = 0
    return RunResult(_trajectory(g), g, reports)


def build_graph(slog: SensorLog, cfg: PipelineConfig = PipelineConfig(), dem: Optional[DemGrid] = None,
                hints: Optional[Trajectory] = None, initial: Optional[Trajectory] = None) -> PoseGraph:
    """Full graph over all triggered nodes, initialized by ``initial`` or dead reckoning."""
    idx = LogIndex(slog)
    stamps = trigger_nodes(slog, cfg)
    if initial is not None:
        if len(initial) != len(stamps) or not np.allclose(initial.stamps, stamps, rtol=0, atol=1e-9):
            raise ValueError("initial trajectory must have one pose per triggered node")
        init_states = initial.states
    g = PoseGraph()
    prev = None
    for k, stamp in enumerate(stamps):
        r = idx.at(stamp)
        if initial is not None:
            init = Pose6D.from_vector(init_states[k])
        else:
            init = initial_state(r) if k == 0 else dead_reckon(g.state(k - 1), prev, r)
        g.add_node(stamp, init, _hint(hints, stamp))
        assemble_node(g, k, r, prev, cfg, dem)
        prev = r
    return g


def run_batch(slog: SensorLog, cfg: PipelineConfig = PipelineConfig(), dem: Optional[DemGrid] = None,
              hints: Optional[Trajectory] = None, initial: Optional[Trajectory] = None) -> RunResult:
    """Optimize all nodes jointly; estimate-dependent factors are refreshed
    ``cfg.refresh_passes`` times, each followed by another solve."""
    g = build_graph(slog, cfg, dem, hints, initial)
    _anchor(g, cfg)
    reports = []
    for p in range(cfg.refresh_passes + 1):
        if p > 0:
            refresh_factors(g, cfg, dem)
        try:
            reports.append(lm_optimize(g, None, cfg.solver))
        except Exception as exc:   # noqa: BLE001
            raise SolveError(len(g) - 1, exc) from exc
    return RunResult(_trajectory(g), g, reports)
