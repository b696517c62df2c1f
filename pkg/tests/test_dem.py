import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import RegularGridInterpolator

from multicue.dem import DemGrid, OutOfBounds, dem_densify, dem_query, read_dem, write_dem


@st.composite
def grids(draw):
    rows = draw(st.integers(2, 7))
    cols = draw(st.integers(2, 7))
    elev = draw(st.lists(st.floats(-100, 100), min_size=rows * cols, max_size=rows * cols))
    origin = (draw(st.floats(-1e3, 1e3)), draw(st.floats(-1e3, 1e3)))
    return DemGrid(origin, draw(st.floats(0.1, 50)), np.reshape(elev, (rows, cols)))


def _oracle(g: DemGrid):
    x = g.origin[0] + g.spacing * np.arange(g.cols)
    y = g.origin[1] + g.spacing * np.arange(g.rows)
    return RegularGridInterpolator((y, x), g.elevations, method="linear")


def test_constant_grid():
    g = DemGrid((0, 0), 10.0, np.full((3, 4), 5.0))
    assert dem_query(g, 12.3, 7.7) == 5.0


def test_midpoint_symmetry():
    g = DemGrid((0, 0), 1.0, [[0.0, 0.0], [10.0, 10.0]])
    assert dem_query(g, 0.5, 0.5) == 5.0


def test_out_of_bounds():
    g = DemGrid((0, 0), 1.0, np.zeros((2, 2)))
    with pytest.raises(OutOfBounds):
        dem_query(g, 1.0 + 1e-9, 0.5)
    assert dem_query(g, 1.0, 1.0) == 0.0


@pytest.mark.parametrize("elev,spacing", [(np.zeros((1, 3)), 1.0), (np.zeros((2, 2)), 0.0),
                                          ([[0, np.nan], [0, 0]], 1.0)])
def test_invalid_grid(elev, spacing):
    with pytest.raises(ValueError):
        DemGrid((0, 0), spacing, elev)


@settings(max_examples=200)
@given(grids(), st.floats(0, 1), st.floats(0, 1))
def test_query_matches_scipy(g, a, b):
    xmin, xmax, ymin, ymax = g.extent
    x = min(xmin + a * (xmax - xmin), xmax)
    y = min(ymin + b * (ymax - ymin), ymax)
    assert abs(dem_query(g, x, y) - float(_oracle(g)([y, x])[0])) <= 1e-9 * (1 + np.abs(g.elevations).max())


@settings(max_examples=200)
@given(grids())
def test_exact_at_nodes(g):
    for r in range(g.rows):
        for c in range(g.cols):
            x = g.origin[0] + c * g.spacing
            y = g.origin[1] + r * g.spacing
            if g.contains(x, y):
                assert dem_query(g, x, y) == pytest.approx(g.elevations[r, c], abs=1e-9)


@settings(max_examples=200)
@given(grids(), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_continuity_across_cells(g, a, b):
    xmin, xmax, ymin, ymax = g.extent
    # boundary between the first two columns
    x = xmin + g.spacing
    y = ymin + b * (ymax - ymin)
    if x >= xmax:
        return
    eps = 1e-7 * g.spacing
    jump = abs(dem_query(g, x - eps, y) - dem_query(g, x + eps, y))
    slope = np.abs(np.diff(g.elevations, axis=1)).max() / g.spacing
    assert jump <= 2 * eps * slope + 1e-9


def test_densify_examples():
    g = DemGrid((1, 2), 10.0, np.full((3, 3), 4.0))
    assert dem_densify(g, 1) is g
    d = dem_densify(g, 4)
    assert d.spacing == 2.5 and np.all(d.elevations == 4.0)
    xs = 10.0 * np.arange(3)
    ramp = DemGrid((0, 0), 10.0, 0.3 * xs[None, :] - 0.2 * xs[:, None])
    d = dem_densify(ramp, 2)
    fx = 5.0 * np.arange(d.cols)
    np.testing.assert_allclose(d.elevations, 0.3 * fx[None, :] - 0.2 * fx[:, None], atol=1e-12)
    with pytest.raises(ValueError):
        dem_densify(g, 0)


@settings(max_examples=100)
@given(grids(), st.integers(1, 5))
def test_densify_agrees_with_query(g, k):
    d = dem_densify(g, k)
    assert d.extent == pytest.approx(g.extent)
    for r in range(d.rows):
        for c in range(d.cols):
            x = min(d.origin[0] + c * d.spacing, g.extent[1])
            y = min(d.origin[1] + r * d.spacing, g.extent[3])
            assert abs(d.elevations[r, c] - dem_query(g, x, y)) <= 1e-12 * (1 + np.abs(g.elevations).max())


@settings(max_examples=100)
@given(grids())
def test_file_round_trip(tmp_path_factory, g):
    p = tmp_path_factory.mktemp("dem") / "g.txt"
    write_dem(g, p)
    h = read_dem(p)
    assert np.array_equal(h.elevations, g.elevations) and h.spacing == g.spacing
    assert np.array_equal(h.origin, g.origin)
    first = p.read_bytes()
    write_dem(h, p)
    assert p.read_bytes() == first


def test_read_rejects_bad_shape(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("DEM 0 0 1 2 2\n1 2\n3\n")
    with pytest.raises(ValueError, match="bad.txt"):
        read_dem(p)
