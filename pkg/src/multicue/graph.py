"""Pose graph container: node states, factor storage, MRF adjacency, total cost."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .factors import Factor, FactorKind
from .geometry import Pose6D, so3_exp


@dataclass
class GraphNode:
    id: int
    stamp: float
    state: Pose6D
    row_hint: Optional[int] = None


class _Growable:
    """Append-only array with amortized doubling."""

    def __init__(self, shape_tail, dtype):
        self._buf = np.zeros((16,) + tuple(shape_tail), dtype=dtype)
        self.n = 0

    def append(self, value):
        if self.n == len(self._buf):
            self._buf = np.concatenate([self._buf, np.zeros_like(self._buf)])
        self._buf[self.n] = value
        self.n += 1

    @property
    def data(self):
        return self._buf[: self.n]


class PoseGraph:
    """Nodes with 6-DoF states plus unary/binary factors.

    States live in one ``(N, 6)`` array so the solver can work on them in
    place; factors are stored both as :class:`Factor` objects and packed into
    arrays for the kernels.  Nodes with id below ``frozen_below`` are held
    fixed by the optimizers.
    """

    def __init__(self):
        self._stamps: list[float] = []
        self._rows: list[Optional[int]] = []
        self._states = _Growable((6,), float)
        self.factors: list[Factor] = []
        self._kinds = _Growable((), np.int32)
        self._ii = _Growable((), np.int32)
        self._jj = _Growable((), np.int32)
        self._z = _Growable((6,), float)
        self._info = _Growable((6, 6), float)
        self._mrf_pairs: set[tuple[int, int]] = set()
        # cross-row adjacency, kept even when no MRF factor is built on it
        self.row_links: dict[int, set[int]] = {}
        self.frozen_below = 0

    # -- nodes ------------------------------------------------------------
    def __len__(self) -> int:
        return len(self._stamps)

    @property
    def states(self) -> np.ndarray:
        """Live ``(N, 6)`` view of the node states."""
        return self._states.data

    @property
    def stamps(self) -> np.ndarray:
        return np.asarray(self._stamps)

    @property
    def row_hints(self) -> list[Optional[int]]:
        return list(self._rows)

    @property
    def nodes(self) -> list[GraphNode]:
        return [self.node(i) for i in range(len(self))]

    def node(self, i: int) -> GraphNode:
        return GraphNode(i, self._stamps[i], Pose6D.from_vector(self.states[i]), self._rows[i])

    def state(self, i: int) -> Pose6D:
        return Pose6D.from_vector(self.states[i])

    def set_state(self, i: int, p: Pose6D) -> None:
        self.states[i] = p.vector()

    def transform(self, i: int) -> np.ndarray:
        X = np.eye(4)
        X[:3, :3] = so3_exp(self.states[i, 3:])
        X[:3, 3] = self.states[i, :3]
        return X

    def add_node(self, stamp: float, initial_state: Pose6D, row_hint: Optional[int] = None) -> int:
        if self._stamps and not stamp > self._stamps[-1]:
            raise ValueError(f"stamp {stamp} is not after the last node stamp {self._stamps[-1]}")
        self._stamps.append(float(stamp))
        self._rows.append(row_hint)
        self._states.append(initial_state.vector())
        return len(self._stamps) - 1

    # -- factors ----------------------------------------------------------
    def add_factor(self, f: Factor) -> bool:
        """Insert ``f``; returns False for a duplicate MRF edge."""
        n = len(self)
        for k in f.nodes():
            if not 0 <= k < n:
                raise ValueError(f"factor references unknown node {k}")
        if f.kind == FactorKind.MRF:
            key = (min(f.node_i, f.node_j), max(f.node_i, f.node_j))
            if key in self._mrf_pairs:
                return False
            self._mrf_pairs.add(key)
        self._store(f)
        return True

    def _store(self, f: Factor) -> None:
        self.factors.append(f)
        self._kinds.append(int(f.kind))
        self._ii.append(f.node_i)
        self._jj.append(-1 if f.node_j is None else f.node_j)
        self._z.append(f.z)
        self._info.append(f.info)

    def add_factors(self, fs: Iterable[Factor]) -> list[Factor]:
        return [f for f in fs if self.add_factor(f)]

    def remove_kinds(self, kinds) -> int:
        """Drop every factor whose kind is in ``kinds``; returns how many went."""
        kinds = {FactorKind(k) for k in kinds}
        keep = [f for f in self.factors if f.kind not in kinds]
        dropped = len(self.factors) - len(keep)
        if dropped:
            self.factors = []
            for name in ("_kinds", "_ii", "_jj", "_z", "_info"):
                getattr(self, name).n = 0
            if FactorKind.MRF in kinds:
                self._mrf_pairs.clear()
            for f in keep:
                self._store(f)
        return dropped

    def link_rows(self, i: int, j: int) -> None:
        """Record that ``i`` and ``j`` lie in adjacent crop rows."""
        self.row_links.setdefault(i, set()).add(j)
        self.row_links.setdefault(j, set()).add(i)

    def has_mrf(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._mrf_pairs

    def packed(self):
        """``(kinds, ii, jj, z, info)`` arrays over all factors."""
        return (self._kinds.data, self._ii.data, self._jj.data, self._z.data, self._info.data)

    def mrf_pairs(self) -> np.ndarray:
        """Sorted ``(M, 2)`` array of MRF edges ``(low, high)``."""
        if not self._mrf_pairs:
            return np.zeros((0, 2), dtype=int)
        return np.array(sorted(self._mrf_pairs), dtype=int)


# ---------------------------------------------------------------------------

def add_node(g: PoseGraph, stamp: float, initial_state: Pose6D, row_hint: Optional[int] = None) -> int:
    return g.add_node(stamp, initial_state, row_hint)


def _lateral_offsets(g: PoseGraph, i: int, cand: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    states = g.states
    d = states[cand, :2] - states[i, :2]
    heading = so3_exp(states[i, 3:])[:2, 0]
    norm = np.hypot(*heading)
    heading = heading / norm if norm > 1e-9 else np.array([1.0, 0.0])
    lateral = heading[0] * d[:, 1] - heading[1] * d[:, 0]
    return np.hypot(d[:, 0], d[:, 1]), lateral


def cross_row_neighbors(g: PoseGraph, i: int, row_spacing: float = 1.5,
                        radius: Optional[float] = None, exclude: int = 5,
                        candidates: Optional[np.ndarray] = None) -> list[int]:
    """Closest node in each adjacent crop row (at most one per side).

    With row hints, the adjacent rows are ``row_hint +/- 1``.  Otherwise the
    search runs over nodes within ``radius`` (default twice the row spacing),
    skipping ids within ``exclude`` of ``i`` and nodes less than half a row
    spacing to the side; the side is the sign of the lateral offset w.r.t.
    the heading of node ``i``.
    """
    n = len(g)
    if candidates is None:
        candidates = np.arange(n)
    candidates = candidates[candidates != i]
    if len(candidates) == 0:
        return []
    rows = g._rows
    if rows[i] is not None:
        out = []
        cand_rows = np.array([-10**9 if rows[c] is None else rows[c] for c in candidates])
        for delta in (-1, 1):
            sel = candidates[cand_rows == rows[i] + delta]
            if len(sel):
                dist = np.hypot(*(g.states[sel, :2] - g.states[i, :2]).T)
                out.append(int(sel[np.argmin(dist)]))
        return sorted(out)
    radius = 2.0 * row_spacing if radius is None else radius
    cand = candidates[np.abs(candidates - i) > exclude]
    if len(cand) == 0:
        return []
    dist, lat = _lateral_offsets(g, i, cand)
    ok = (dist <= radius) & (np.abs(lat) >= 0.5 * row_spacing)
    out = []
    for side in (-1.0, 1.0):
        sel = ok & (np.sign(lat) == side)
        if np.any(sel):
            k = np.flatnonzero(sel)[np.argmin(dist[sel])]
            out.append(int(cand[k]))
    return sorted(out)


def mrf_neighbors(g: PoseGraph, i: int, row_spacing: float = 1.5,
                  radius: Optional[float] = None, exclude: int = 5) -> list[int]:
    """Temporal neighbors ``i-1``, ``i+1`` plus the cross-row neighbors of ``i``."""
    if not 0 <= i < len(g):
        raise IndexError(f"no node {i}")
    out = [k for k in (i - 1, i + 1) if 0 <= k < len(g)]
    out += [k for k in cross_row_neighbors(g, i, row_spacing, radius, exclude) if k not in out]
    return sorted(out)


def factor_errors(g: PoseGraph, impl=None) -> np.ndarray:
    kinds, ii, jj, z, _ = g.packed()
    return kernels.residuals(g.states, kinds, ii, jj, z, impl=impl)


def total_cost(g: PoseGraph, impl=None) -> float:
    """Sum over factors of ``e^T Omega e``."""
    if not g.factors:
        return 0.0
    E = factor_errors(g, impl)
    info = g.packed()[4]
    return float(np.einsum("fi,fij,fj->", E, info, E))


# ---------------------------------------------------------------------------
# text dump

def _g17(x: float) -> str:
    return "%.17g" % x


def write_graph(g: PoseGraph, path) -> None:
    """``NODE id stamp state[6]`` then ``FACTOR kind i [j] z[6] info[36]`` lines."""
    lines = []
    for i in range(len(g)):
        vals = [g._stamps[i], *g.states[i]]
        lines.append(f"NODE {i} " + " ".join(_g17(v) for v in vals))
    for f in g.factors:
        ids = f"{f.node_i}" if f.node_j is None else f"{f.node_i} {f.node_j}"
        nums = " ".join(_g17(v) for v in np.concatenate([f.z, f.info.ravel()]))
        lines.append(f"FACTOR {f.kind.name} {ids} {nums}")
    with open(path, "w") as fh:
        fh.write("".join(ln + "\n" for ln in lines))


def read_graph(path) -> PoseGraph:
    g = PoseGraph()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "NODE":
                    if len(parts) != 9:
                        raise ValueError(f"NODE needs 9 fields, got {len(parts)}")
                    if int(parts[1]) != len(g):
                        raise ValueError(f"node ids must run 0, 1, ... (got {parts[1]})")
                    vals = [float(v) for v in parts[2:]]
                    g.add_node(vals[0], Pose6D.from_vector(vals[1:]))
                elif parts[0] == "FACTOR":
                    kind = FactorKind[parts[1]]
                    nid = 2 if kind.binary else 1
                    if len(parts) != 2 + nid + 42:
                        raise ValueError(f"FACTOR {kind.name} needs {2 + nid + 42} fields, got {len(parts)}")
                    ids = [int(v) for v in parts[2:2 + nid]]
                    nums = np.array([float(v) for v in parts[2 + nid:]])
                    g.add_factor(Factor(kind, ids[0], ids[1] if kind.binary else None,
                                        nums[:6], nums[6:].reshape(6, 6)))
                else:
                    raise ValueError(f"unknown record '{parts[0]}'")
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return g
