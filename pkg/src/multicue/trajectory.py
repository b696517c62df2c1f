"""Stamped pose sequences and their text formats.

Poses are stored as position plus Z-Y-X roll/pitch/yaw, which is what the
files carry, so reading and re-writing a file reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import roll_pitch_yaw, rotation_from_rpy, so3_exp, so3_log


@dataclass
class Trajectory:
    stamps: np.ndarray
    positions: np.ndarray
    rpy: np.ndarray
    row_hints: Optional[np.ndarray] = None

    def __post_init__(self):
        self.stamps = np.asarray(self.stamps, dtype=float).reshape(-1)
        n = len(self.stamps)
        self.positions = np.asarray(self.positions, dtype=float).reshape(n, 3)
        self.rpy = np.asarray(self.rpy, dtype=float).reshape(n, 3)
        if self.row_hints is not None:
            self.row_hints = np.asarray(self.row_hints, dtype=int).reshape(n)
        if n > 1 and not np.all(np.diff(self.stamps) > 0):
            raise ValueError("trajectory stamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.stamps)

    @classmethod
    def from_states(cls, stamps, states, row_hints=None) -> "Trajectory":
        states = np.asarray(states, dtype=float).reshape(-1, 6)
        return cls(stamps, states[:, :3], roll_pitch_yaw(so3_exp(states[:, 3:])), row_hints)

    @property
    def states(self) -> np.ndarray:
        """``(N, 6)`` translation plus axis-angle rows."""
        return np.hstack([self.positions, so3_log(rotation_from_rpy(self.rpy))])

    def rotations(self) -> np.ndarray:
        return rotation_from_rpy(self.rpy)

    def position_at(self, stamps) -> np.ndarray:
        """Linearly interpolated positions; raises outside the stamp span."""
        stamps = np.asarray(stamps, dtype=float)
        if len(self) == 0 or np.any(stamps < self.stamps[0]) or np.any(stamps > self.stamps[-1]):
            raise ValueError("requested stamps fall outside the trajectory span")
        return np.stack([np.interp(stamps, self.stamps, self.positions[:, k]) for k in range(3)], axis=-1)

    def hint_at(self, stamp: float) -> Optional[int]:
        """Row hint of the sample nearest to ``stamp`` (None when unknown)."""
        if self.row_hints is None or len(self) == 0:
            return None
        k = int(np.clip(np.searchsorted(self.stamps, stamp), 1, len(self) - 1))
        if stamp - self.stamps[k - 1] <= self.stamps[k] - stamp:
            k -= 1
        h = int(self.row_hints[k])
        return None if h < 0 else h


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory(traj: Trajectory, path, tag: Optional[str] = None) -> None:
    """``EST`` lines, or ``GT`` lines (with row hint) when the trajectory has hints."""
    tag = tag or ("GT" if traj.row_hints is not None else "EST")
    lines = []
    for k in range(len(traj)):
        vals = [traj.stamps[k], *traj.positions[k], *traj.rpy[k]]
        line = tag + " " + " ".join(_fmt(v) for v in vals)
        if tag == "GT":
            hint = -1 if traj.row_hints is None else int(traj.row_hints[k])
            line += f" {hint}"
        lines.append(line)
    with open(path, "w") as fh:
        fh.write("".join(ln + "\n" for ln in lines))


def read_trajectory(path) -> Trajectory:
    """Parse ``EST`` or ``GT`` lines; GT files carry row hints."""
    stamps, pos, rpy, hints = [], [], [], []
    gt = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag not in ("EST", "GT"):
                raise ValueError(f"{path}:{lineno}: unknown record '{tag}'")
            if gt is None:
                gt = tag == "GT"
            elif gt != (tag == "GT"):
                raise ValueError(f"{path}:{lineno}: mixed EST and GT records")
            want = 9 if gt else 8
            if len(parts) != want:
                raise ValueError(f"{path}:{lineno}: expected {want} fields, got {len(parts)}")
            try:
                vals = [float(v) for v in parts[1:8]]
                if gt:
                    hints.append(int(parts[8]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            stamps.append(vals[0])
            pos.append(vals[1:4])
            rpy.append(vals[4:7])
    return Trajectory(np.array(stamps), np.array(pos).reshape(-1, 3), np.array(rpy).reshape(-1, 3),
                      np.array(hints, dtype=int) if gt else None)
