"""Digital elevation model on a regular grid with bilinear queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OutOfBounds(ValueError):
    """Query point lies outside the grid; the altitude prior is unavailable."""


@dataclass(frozen=True)
class DemGrid:
    """Elevations sampled at ``origin + (col, row) * spacing``.

    ``elevations[r, c]`` is the altitude at ``x = origin[0] + c * spacing``,
    ``y = origin[1] + r * spacing``.
    """

    origin: np.ndarray
    spacing: float
    elevations: np.ndarray = field(repr=False)

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float).reshape(2)
        elev = np.array(self.elevations, dtype=float)
        if elev.ndim != 2 or elev.shape[0] < 2 or elev.shape[1] < 2:
            raise ValueError(f"need at least a 2x2 grid, got shape {elev.shape}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(elev)):
            raise ValueError("elevations must be finite")
        elev.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "elevations", elev)

    @property
    def rows(self) -> int:
        return self.elevations.shape[0]

    @property
    def cols(self) -> int:
        return self.elevations.shape[1]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """``(xmin, xmax, ymin, ymax)``."""
        x0, y0 = self.origin
        return (x0, x0 + (self.cols - 1) * self.spacing,
                y0, y0 + (self.rows - 1) * self.spacing)

    def contains(self, x: float, y: float) -> bool:
        xmin, xmax, ymin, ymax = self.extent
        return xmin <= x <= xmax and ymin <= y <= ymax

    def query(self, x: float, y: float) -> float:
        return dem_query(self, x, y)


def _cell(u: float, n: int) -> tuple[int, float]:
    i = min(int(np.floor(u)), n - 2)
    return i, u - i


def dem_query(g: DemGrid, x: float, y: float) -> float:
    """Bilinear altitude at ``(x, y)``; raises :class:`OutOfBounds` outside the grid."""
    if not g.contains(x, y):
        raise OutOfBounds(f"({x}, {y}) outside DEM extent {g.extent}")
    u = (x - g.origin[0]) / g.spacing
    v = (y - g.origin[1]) / g.spacing
    c, fu = _cell(u, g.cols)
    r, fv = _cell(v, g.rows)
    E = g.elevations
    lo = (1.0 - fu) * E[r, c] + fu * E[r, c + 1]
    hi = (1.0 - fu) * E[r + 1, c] + fu * E[r + 1, c + 1]
    return float((1.0 - fv) * lo + fv * hi)


def dem_densify(coarse: DemGrid, factor: int) -> DemGrid:
    """Resample onto a grid ``factor`` times finer, by bilinear interpolation."""
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return coarse
    rows = (coarse.rows - 1) * factor + 1
    cols = (coarse.cols - 1) * factor + 1
    # exact-rational cell coordinates, so grid points reproduce stored values
    r = np.arange(rows)
    c = np.arange(cols)
    r0 = np.minimum(r // factor, coarse.rows - 2)
    c0 = np.minimum(c // factor, coarse.cols - 2)
    fv = (r - r0 * factor) / factor
    fu = (c - c0 * factor) / factor
    E = coarse.elevations
    e00 = E[np.ix_(r0, c0)]
    e01 = E[np.ix_(r0, c0 + 1)]
    e10 = E[np.ix_(r0 + 1, c0)]
    e11 = E[np.ix_(r0 + 1, c0 + 1)]
    fu = fu[None, :]
    fv = fv[:, None]
    lo = (1.0 - fu) * e00 + fu * e01
    hi = (1.0 - fu) * e10 + fu * e11
    fine = (1.0 - fv) * lo + fv * hi
    return DemGrid(coarse.origin, coarse.spacing / factor, fine)


def write_dem(g: DemGrid, path) -> None:
    lines = [f"DEM {float(g.origin[0])!r} {float(g.origin[1])!r} {float(g.spacing)!r} {g.rows} {g.cols}"]
    for row in g.elevations:
        lines.append(" ".join(repr(float(e)) for e in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dem(path) -> DemGrid:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][0] != "DEM" or len(lines[0]) != 6:
        raise ValueError(f"{path}: missing 'DEM ox oy spacing rows cols' header")
    _, ox, oy, sp, rows, cols = lines[0]
    rows, cols = int(rows), int(cols)
    body = lines[1:]
    if len(body) != rows or any(len(b) != cols for b in body):
        raise ValueError(f"{path}: expected {rows} rows of {cols} values")
    elev = np.array([[float(v) for v in b] for b in body])
    return DemGrid((float(ox), float(oy)), float(sp), elev)
