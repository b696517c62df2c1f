import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from multicue.dem import dem_query
from multicue.geometry import so3_exp, so3_log
from multicue.pipeline import trigger_stamps
from multicue.sim import (FieldConfig, NoiseConfig, SteeringMode, export_dem, field_extent,
                          generate_truth, gps_modes, outage_over_row, simulate_sensors,
                          surface_rotation, terrain_gradient, terrain_height)

SMALL = FieldConfig(rows=3, row_length=12.0, seed=5)


@pytest.fixture(scope="module")
def default_truth():
    return generate_truth(FieldConfig())


# -- terrain ------------------------------------------------------------------

@settings(max_examples=200)
@given(st.floats(-5, 35), st.floats(-5, 12), st.integers(0, 20))
def test_terrain_gradient_matches_finite_differences(x, y, seed):
    cfg = FieldConfig(seed=seed)
    h = 1e-5
    gx = (terrain_height(cfg, x + h, y) - terrain_height(cfg, x - h, y)) / (2 * h)
    gy = (terrain_height(cfg, x, y + h) - terrain_height(cfg, x, y - h)) / (2 * h)
    ax, ay = terrain_gradient(cfg, x, y)
    assert abs(gx - ax) < 1e-7 and abs(gy - ay) < 1e-7


@pytest.mark.parametrize("spacing", [1.0, 2.5, 5.0])
def test_dem_interpolation_error_bound(spacing, rng):
    cfg = FieldConfig(seed=2)
    dem = export_dem(cfg, spacing)
    a = cfg.amplitude
    bound = a * (np.pi * spacing / min(cfg.wavelengths)) ** 2 / 2
    xmin, xmax, ymin, ymax = field_extent(cfg)
    worst = 0.0
    for x, y in zip(rng.uniform(xmin, xmax, 2000), rng.uniform(ymin, ymax, 2000)):
        worst = max(worst, abs(dem_query(dem, x, y) - terrain_height(cfg, x, y)))
    assert worst <= bound


def test_dem_covers_every_path():
    for mode in SteeringMode:
        cfg = FieldConfig(mode=mode, seed=1)
        dem = export_dem(cfg)
        t = generate_truth(cfg)
        assert all(dem.contains(x, y) for x, y in t.positions[:, :2])


def test_surface_rotation_is_orthonormal_and_follows_heading():
    cfg = FieldConfig(seed=4)
    R = surface_rotation(cfg, np.array([3.0, 10.0]), np.array([1.0, 4.0]), np.array([0.3, -2.0]))
    np.testing.assert_allclose(R @ np.swapaxes(R, -1, -2), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.arctan2(R[:, 1, 0], R[:, 0, 0]), [0.3, -2.0], atol=1e-12)


# -- trajectories ------------------------------------------------------------

def test_single_row_is_straight():
    t = generate_truth(FieldConfig(rows=1, row_length=20.0))
    np.testing.assert_allclose(t.positions[:, 1], 0.0, atol=1e-12)
    np.testing.assert_allclose(t.rpy[:, 2], 0.0, atol=1e-12)
    assert np.all(np.diff(t.positions[:, 0]) >= -1e-12)


def test_same_heading_rows_share_yaw():
    t = generate_truth(FieldConfig(mode=SteeringMode.SAME_HEADING, seed=1))
    on = t.row_hints >= 0
    np.testing.assert_allclose(t.rpy[on, 2], 0.0, atol=1e-9)


def test_serpentine_alternates_direction(default_truth):
    t = default_truth
    for row in range(6):
        yaw = t.rpy[t.row_hints == row, 2]
        want = 0.0 if row % 2 == 0 else np.pi
        assert np.allclose(np.cos(yaw - want), 1.0, atol=1e-9)


def test_rows_are_spaced_and_visited_in_order(default_truth):
    t = default_truth
    seen = [r for r in t.row_hints if r >= 0]
    order = [seen[0]] + [b for a, b in zip(seen, seen[1:]) if b != a]
    assert order == list(range(6))
    for row in range(6):
        np.testing.assert_allclose(t.positions[t.row_hints == row, 1], 1.5 * row, atol=1e-9)


def test_speed_limit_and_positions_on_terrain(default_truth):
    t = default_truth
    cfg = FieldConfig()
    v = np.hypot(*np.diff(t.positions[:, :2], axis=0).T) / np.diff(t.stamps)
    assert v.max() <= cfg.speed + 1e-9
    np.testing.assert_allclose(t.positions[:, 2], terrain_height(cfg, *t.positions[:, :2].T), atol=1e-12)


def test_default_node_count(default_truth):
    slog = simulate_sensors(default_truth, NoiseConfig.noiseless())
    n = len(trigger_stamps(slog.wo, 0.3))
    assert 600 <= n <= 900


def test_truth_is_deterministic():
    a, b = generate_truth(SMALL), generate_truth(SMALL)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.rpy, b.rpy)
    assert not np.array_equal(a.positions, generate_truth(FieldConfig(rows=3, row_length=12.0, seed=6)).positions)


def test_config_validation():
    with pytest.raises(ValueError):
        FieldConfig(rows=0)
    with pytest.raises(ValueError):
        NoiseConfig(gps_mode="DGPS")
    with pytest.raises(ValueError):
        NoiseConfig(outages=((5.0, 2.0, "PPP"),))


# -- sensors -----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_truth():
    return generate_truth(SMALL)


def test_sensors_deterministic(small_truth):
    a = simulate_sensors(small_truth, NoiseConfig(seed=9))
    b = simulate_sensors(small_truth, NoiseConfig(seed=9))
    for name, s in a.streams().items():
        assert np.array_equal(s.values, b.streams()[name].values)


def test_noiseless_streams_reproduce_truth(small_truth):
    t = small_truth
    slog = simulate_sensors(t, NoiseConfig.noiseless())
    np.testing.assert_allclose(slog.gps.values, t.position_at(slog.gps.stamps), atol=1e-12)
    k = np.searchsorted(t.stamps, slog.imu.stamps)
    np.testing.assert_allclose(slog.imu.values, t.rpy[k, :2], atol=1e-12)
    # chaining relative VO motions recovers the end pose
    R = t.rotations()
    for s in (slog.vo, slog.lid):
        k = np.searchsorted(t.stamps, s.stamps)
        Ra, p = R[k[0]].copy(), t.positions[k[0]].copy()
        for v in s.values[1:]:
            p = p + Ra @ v[:3]
            Ra = Ra @ so3_exp(v[3:])
        np.testing.assert_allclose(p, t.positions[k[-1]], atol=1e-9)
        np.testing.assert_allclose(so3_log(Ra.T @ R[k[-1]]), 0.0, atol=1e-9)


def test_ppp_altitude_noise_level():
    t = generate_truth(FieldConfig(seed=3))
    slog = simulate_sensors(t, NoiseConfig(gps_mode="PPP", seed=3))
    dz = slog.gps.values[:, 2] - t.position_at(slog.gps.stamps)[:, 2]
    assert np.std(dz) == pytest.approx(1.5, rel=0.1)


@pytest.mark.parametrize("mode", ["RTK", "PPP"])
def test_gps_covariance_is_consistent(mode):
    # normalized squared errors follow a chi-square law with 3 dof
    t = generate_truth(FieldConfig(seed=8))
    slog = simulate_sensors(t, NoiseConfig(gps_mode=mode, seed=8))
    e = slog.gps.values - t.position_at(slog.gps.stamps)
    nees = np.einsum("ni,nij,nj->n", e, np.linalg.inv(slog.gps.covs), e)
    n = len(nees)
    lo, hi = stats.chi2.ppf([0.001, 0.999], 3 * n) / n
    assert lo <= nees.mean() <= hi


def test_wo_covariance_is_consistent(small_truth):
    t = small_truth
    clean = simulate_sensors(t, NoiseConfig.noiseless())
    noisy = simulate_sensors(t, NoiseConfig(seed=4))
    e = (noisy.wo.values - clean.wo.values)[1:]
    nees = np.einsum("ni,nij,nj->n", e, np.linalg.inv(noisy.wo.covs[1:]), e)
    n = len(nees)
    lo, hi = stats.chi2.ppf([0.001, 0.999], 3 * n) / n
    assert lo <= nees.mean() <= hi


def test_outage_schedule(small_truth):
    span = outage_over_row(SMALL, small_truth, 1)
    noise = NoiseConfig(outages=(span,))
    slog = simulate_sensors(small_truth, noise)
    inside = (slog.gps.stamps >= span[0]) & (slog.gps.stamps < span[1])
    assert inside.any() and (~inside).any()
    assert all(m == "PPP" for m, i in zip(slog.gps.modes, inside) if i)
    assert all(m == "RTK" for m, i in zip(slog.gps.modes, inside) if not i)
    assert gps_modes(noise, np.array([span[1]])) == ["RTK"]
    with pytest.raises(ValueError):
        outage_over_row(SMALL, small_truth, 7)


def test_lidar_readings_sit_on_node_triggers(small_truth):
    slog = simulate_sensors(small_truth, NoiseConfig(seed=1))
    np.testing.assert_array_equal(slog.lid.stamps, trigger_stamps(slog.wo, 0.3))
