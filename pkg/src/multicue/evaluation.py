"""Position error statistics against ground truth and cue ablations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from .factors import ALL_KINDS, FactorKind
from .trajectory import Trajectory

CSV_HEADER = ["cues", "mode", "err_x", "err_y", "err_z", "mean", "max", "rmse", "n"]


@dataclass(frozen=True)
class RunStats:
    rmse: float
    max_abs: float
    mean_abs: float
    err_x: float
    err_y: float
    err_z: float
    n: int


def stats_from_errors(err) -> RunStats:
    err = np.asarray(err, dtype=float).reshape(-1, 3)
    if len(err) == 0:
        raise ValueError("no samples to evaluate")
    norms = np.linalg.norm(err, axis=1)
    ax = np.mean(np.abs(err), axis=0)
    return RunStats(float(np.sqrt(np.mean(norms ** 2))), float(norms.max()), float(norms.mean()),
                    float(ax[0]), float(ax[1]), float(ax[2]), len(err))


def compute_stats(estimate: Trajectory, truth: Trajectory) -> RunStats:
    """Errors of ``estimate`` against ``truth`` interpolated at the estimate stamps.

    No alignment is applied.  Estimates outside the truth span are ignored;
    an empty overlap is an error.
    """
    lo, hi = truth.stamps[0], truth.stamps[-1]
    keep = (estimate.stamps >= lo) & (estimate.stamps <= hi)
    if not np.any(keep):
        raise ValueError("estimate and truth do not overlap in time")
    ref = truth.position_at(estimate.stamps[keep])
    return stats_from_errors(estimate.positions[keep] - ref)


# ---------------------------------------------------------------------------
# cue masks

def parse_mask(text: str) -> frozenset:
    """``GPS+WO+VO`` style cue set; ``ALL`` selects every cue."""
    out = set()
    for part in text.strip().split("+"):
        name = part.strip().upper()
        if not name:
            raise ValueError(f"empty cue name in '{text}'")
        if name == "ALL":
            out |= ALL_KINDS
        elif name in FactorKind.__members__:
            out.add(FactorKind[name])
        else:
            raise ValueError(f"unknown cue '{part}'")
    return frozenset(out)


def parse_masks(text: str) -> list:
    return [parse_mask(m) for m in text.split(";") if m.strip()]


def format_mask(mask: Iterable) -> str:
    mask = frozenset(FactorKind(k) for k in mask)
    if mask == ALL_KINDS:
        return "ALL"
    return "+".join(k.name for k in sorted(mask))


@dataclass(frozen=True)
class AblationRow:
    cues: frozenset
    mode: str
    stats: RunStats


def ablation_table(slog, dem, truth: Trajectory, masks, cfg=None, online: bool = False,
                   hints: Optional[Trajectory] = None) -> list:
    """One batch row per cue mask, plus an online row each when ``online``."""
    from .pipeline import PipelineConfig, run_batch, run_online
    cfg = cfg or PipelineConfig()
    rows = []
    for mask in masks:
        c = replace(cfg, cues=frozenset(mask))
        res = run_batch(slog, c, dem, hints)
        rows.append(AblationRow(c.cues, "batch", compute_stats(res.trajectory, truth)))
        if online:
            res = run_online(slog, c, dem, hints)
            rows.append(AblationRow(c.cues, "online", compute_stats(res.trajectory, truth)))
    return rows


def table_csv(rows, labels=None) -> str:
    """CSV text; ``labels`` replaces the formatted cue mask in the first column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for k, r in enumerate(rows):
        s = r.stats
        w.writerow([labels[k] if labels else format_mask(r.cues), r.mode] +
                   [f"{v:.6f}" for v in (s.err_x, s.err_y, s.err_z, s.mean_abs, s.max_abs, s.rmse)] +
                   [s.n])
    return buf.getvalue()
