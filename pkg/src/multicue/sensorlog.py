"""Per-sensor reading streams and the line-oriented log format.

Relative sensors (WO, VO, LID) report the motion since their previous
reading, expressed in the robot frame at that previous reading.  WO payloads
are planar ``(dx, dy, dyaw)``; VO and LID payloads are 6-vectors
``(t, axis-angle)``.  GPS payloads are positions with an RTK/PPP tag and IMU
payloads are ``(roll, pitch)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

# tag -> payload width
WIDTH = {"WO": 3, "VO": 6, "LID": 6, "GPS": 3, "IMU": 2}
GPS_MODES = ("RTK", "PPP")


@dataclass
class Stream:
    stamps: np.ndarray
    values: np.ndarray
    covs: np.ndarray
    modes: Optional[list] = None

    def __post_init__(self):
        self.stamps = np.asarray(self.stamps, dtype=float).reshape(-1)
        n = len(self.stamps)
        values = np.asarray(self.values, dtype=float)
        self.values = values if values.ndim == 2 and len(values) == n else values.reshape(n, -1)
        d = self.values.shape[1]
        self.covs = np.asarray(self.covs, dtype=float).reshape(n, d, d)
        if n > 1 and np.any(np.diff(self.stamps) < 0):
            raise ValueError("stream stamps must be sorted")
        if self.modes is not None and len(self.modes) != n:
            raise ValueError("one mode tag per reading")

    def __len__(self) -> int:
        return len(self.stamps)

    @classmethod
    def empty(cls, width: int, tagged: bool = False) -> "Stream":
        return cls(np.zeros(0), np.zeros((0, width)), np.zeros((0, width, width)),
                   [] if tagged else None)

    def span(self) -> Optional[tuple[float, float]]:
        return (float(self.stamps[0]), float(self.stamps[-1])) if len(self) else None

    def covers(self, stamp: float) -> bool:
        return len(self) > 0 and self.stamps[0] <= stamp <= self.stamps[-1]

    def bracket(self, stamp: float) -> tuple[int, int, float]:
        """``(k0, k1, alpha)`` with ``stamp = (1-alpha) s[k0] + alpha s[k1]``."""
        s = self.stamps
        k1 = int(np.searchsorted(s, stamp, side="left"))
        if k1 < len(s) and s[k1] == stamp:
            return k1, k1, 0.0
        k0 = k1 - 1
        return k0, k1, float((stamp - s[k0]) / (s[k1] - s[k0]))

    def nearest(self, stamp: float) -> int:
        k0, k1, a = self.bracket(stamp)
        return k0 if a <= 0.5 else k1


@dataclass
class SensorLog:
    wo: Stream = field(default_factory=lambda: Stream.empty(3))
    vo: Stream = field(default_factory=lambda: Stream.empty(6))
    lid: Stream = field(default_factory=lambda: Stream.empty(6))
    gps: Stream = field(default_factory=lambda: Stream.empty(3, tagged=True))
    imu: Stream = field(default_factory=lambda: Stream.empty(2))

    def streams(self) -> dict:
        return {"WO": self.wo, "VO": self.vo, "LID": self.lid, "GPS": self.gps, "IMU": self.imu}


def _fmt(x) -> str:
    return repr(float(x))


def write_log(slog: SensorLog, path) -> None:
    """One reading per line, merged by stamp; ties keep the WO, VO, LID, GPS, IMU order."""
    rows = []
    for order, (tag, st) in enumerate(slog.streams().items()):
        for k in range(len(st)):
            parts = [tag, _fmt(st.stamps[k])]
            parts += [_fmt(v) for v in st.values[k]]
            parts += [_fmt(v) for v in st.covs[k].ravel()]
            if tag == "GPS":
                parts.append(st.modes[k])
            rows.append((st.stamps[k], order, k, " ".join(parts)))
    rows.sort(key=lambda r: r[:3])
    with open(path, "w") as fh:
        fh.write("".join(r[3] + "\n" for r in rows))


def read_log(path) -> SensorLog:
    """Parse a sensor log; unknown tags are skipped with a warning."""
    acc = {tag: ([], [], [], []) for tag in WIDTH}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag not in WIDTH:
                log.warning("%s:%d: skipping unknown tag '%s'", path, lineno, tag)
                continue
            d = WIDTH[tag]
            want = 2 + d + d * d + (tag == "GPS")
            if len(parts) != want:
                raise ValueError(f"{path}:{lineno}: {tag} needs {want} fields, got {len(parts)}")
            try:
                nums = [float(v) for v in parts[1:2 + d + d * d]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            st, vals, covs, modes = acc[tag]
            st.append(nums[0])
            vals.append(nums[1:1 + d])
            covs.append(nums[1 + d:])
            if tag == "GPS":
                if parts[-1] not in GPS_MODES:
                    raise ValueError(f"{path}:{lineno}: GPS mode must be RTK or PPP, got '{parts[-1]}'")
                modes.append(parts[-1])
    out = {}
    for tag, (st, vals, covs, modes) in acc.items():
        d = WIDTH[tag]
        order = np.argsort(np.asarray(st), kind="stable")
        out[tag] = Stream(np.asarray(st)[order], np.asarray(vals).reshape(-1, d)[order],
                          np.asarray(covs).reshape(-1, d, d)[order],
                          [modes[k] for k in order] if tag == "GPS" else None)
    return SensorLog(out["WO"], out["VO"], out["LID"], out["GPS"], out["IMU"])
