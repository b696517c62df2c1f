import filecmp

import numpy as np
import pytest

from multicue.dem import read_dem, write_dem
from multicue.graph import read_graph, total_cost, write_graph
from multicue.pipeline import PipelineConfig, build_graph
from multicue.sensorlog import read_log, write_log
from multicue.trajectory import Trajectory, read_trajectory, write_trajectory


def _twice(tmp_path, write, read, obj, **kw):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write(obj, a, **kw)
    back = read(a)
    write(back, b, **kw)
    assert filecmp.cmp(a, b, shallow=False)
    return back


def test_log_round_trip(tmp_path, small_run):
    _, _, slog, _ = small_run
    back = _twice(tmp_path, write_log, read_log, slog)
    for name, s in slog.streams().items():
        t = back.streams()[name]
        assert np.array_equal(s.stamps, t.stamps)
        assert np.array_equal(s.values, t.values)
        assert np.array_equal(s.covs, t.covs)
    assert back.gps.modes == slog.gps.modes


def test_dem_round_trip(tmp_path, small_run):
    *_, dem = small_run
    back = _twice(tmp_path, write_dem, read_dem, dem)
    assert np.array_equal(back.elevations, dem.elevations)
    assert np.array_equal(back.origin, dem.origin) and back.spacing == dem.spacing


def test_graph_round_trip(tmp_path, small_run):
    _, truth, slog, dem = small_run
    g = build_graph(slog, PipelineConfig(), dem, truth)
    back = _twice(tmp_path, write_graph, read_graph, g)
    assert np.array_equal(back.states, g.states)
    assert len(back.factors) == len(g.factors)
    assert total_cost(back) == total_cost(g)


@pytest.mark.parametrize("tag", ["GT", "EST"])
def test_trajectory_round_trip(tmp_path, small_run, tag):
    _, truth, _, _ = small_run
    traj = truth if tag == "GT" else Trajectory(truth.stamps, truth.positions, truth.rpy)
    back = _twice(tmp_path, write_trajectory, read_trajectory, traj, tag=tag)
    assert np.array_equal(back.positions, traj.positions)
    assert np.array_equal(back.rpy, traj.rpy)


@pytest.mark.parametrize("text, where", [
    ("WO 0.0 1 2\n", ":1:"),
    ("GPS 0.0 1 2 3 1 0 0 0 1 0 0 0 1 RTK\nGPS 0.1 1 2 3 1 0 0 0 1 0 0 0 1 DGPS\n", ":2:"),
    ("WO 0.0 1 2 x 1 0 0 0 1 0 0 0 1\n", ":1:"),
])
def test_log_errors_name_the_line(tmp_path, text, where):
    p = tmp_path / "bad.log"
    p.write_text(text)
    with pytest.raises(ValueError, match=where):
        read_log(p)


def test_trajectory_errors(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("EST 0 0 0 0 0 0 0\nGT 1 0 0 0 0 0 0 0\n")
    with pytest.raises(ValueError, match=":2:"):
        read_trajectory(p)
    p.write_text("POSE 0 0 0 0 0 0 0\n")
    with pytest.raises(ValueError, match="unknown record"):
        read_trajectory(p)


def test_dem_header_required(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("1 2\n3 4\n")
    with pytest.raises(ValueError, match="header"):
        read_dem(p)
