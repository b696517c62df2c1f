import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, logm

from multicue.geometry import (Pose6D, compose, interp_pose, invert, phi, relative, retract,
                               rot_diff, roll_pitch_yaw, rotation_from_rpy, skew, so3_exp, so3_log,
                               to_transform, wrap_angle)

from .conftest import poses, rotvecs, transforms

N = 1000


def _logm_vec(R):
    W = np.real(logm(R))
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def _same_pose(a: Pose6D, b: Pose6D, tol=1e-9):
    return np.allclose(a.t, b.t, atol=tol) and np.allclose(so3_exp(a.r), so3_exp(b.r), atol=tol)


# -- examples ---------------------------------------------------------------

def test_to_transform_identity():
    assert np.array_equal(to_transform(Pose6D.identity()), np.eye(4))


def test_to_transform_pure_translation():
    X = to_transform(Pose6D([1, 2, 3], [0, 0, 0]))
    assert np.array_equal(X[:3, :3], np.eye(3))
    assert np.array_equal(X[:3, 3], [1, 2, 3])


def test_to_transform_quarter_turn_z():
    X = to_transform(Pose6D([0, 0, 0], [0, 0, np.pi / 2]))
    np.testing.assert_allclose(X[:3, :3], [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_phi_identity_and_round_trip():
    assert np.array_equal(phi(np.eye(4)), np.zeros(6))
    np.testing.assert_allclose(phi(to_transform(Pose6D([1, 0, 0], [0, 0, 0.3]))), [1, 0, 0, 0, 0, 0.3],
                               atol=1e-15)


def test_phi_near_pi_matches_logm():
    a = np.pi - 1e-8
    R = expm(skew([a, 0, 0]))
    X = np.eye(4)
    X[:3, :3] = R
    r = phi(X)[3:]
    np.testing.assert_allclose(r, [a, 0, 0], atol=1e-7)
    assert np.linalg.norm(r) <= np.pi


def test_rotation_exactly_pi_tie_break():
    for axis in ([1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 1]):
        axis = np.array(axis, float) / np.linalg.norm(axis)
        r = so3_log(so3_exp(-np.pi * axis))
        assert np.isclose(np.linalg.norm(r), np.pi)
        first = r[np.flatnonzero(np.abs(r) > 1e-9)[0]]
        assert first > 0


def test_relative_examples(rng):
    from .conftest import random_pose
    X = to_transform(random_pose(rng))
    np.testing.assert_allclose(relative(X, X), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(relative(np.eye(4), X), X, atol=1e-12)


def test_interp_examples():
    a = Pose6D([0, 0, 0], [0, 0, 0])
    b = Pose6D([2, 0, 0], [0, 0, 1.0])
    m = interp_pose(a, b, 0.5)
    np.testing.assert_allclose(m.t, [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(m.r, [0, 0, 0.5], atol=1e-15)
    assert _same_pose(interp_pose(a, b, 0.0), a)
    assert _same_pose(interp_pose(a, b, 1.0), b)


@pytest.mark.parametrize("alpha", [-0.1, 1.5, np.nan])
def test_interp_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        interp_pose(Pose6D.identity(), Pose6D.identity(), alpha)


def test_rot_diff_examples():
    np.testing.assert_allclose(rot_diff([0, 0, 0.1], [0, 0, 0.4]), [0, 0, 0.3], atol=1e-15)
    assert np.array_equal(rot_diff([0.2, -0.1, 0.4], [0.2, -0.1, 0.4]), np.zeros(3))


def test_pose_rejects_non_finite():
    with pytest.raises(ValueError):
        Pose6D([np.inf, 0, 0], [0, 0, 0])


def test_wrap_angle():
    np.testing.assert_allclose(wrap_angle(np.array([3 * np.pi / 2, -3 * np.pi / 2, 0.1])),
                               [-np.pi / 2, np.pi / 2, 0.1])


# -- properties (scipy expm/logm as the independent oracle) -----------------

@settings(max_examples=N)
@given(rotvecs())
def test_so3_exp_matches_expm(r):
    np.testing.assert_allclose(so3_exp(r), expm(skew(r)), atol=1e-9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")   # scipy's norm estimator inside logm
@settings(max_examples=N)
@given(rotvecs(np.pi - 1e-3))
def test_so3_log_matches_logm(r):
    np.testing.assert_allclose(so3_log(expm(skew(r))), _logm_vec(expm(skew(r))), atol=1e-9)


@settings(max_examples=N)
@given(poses())
def test_transform_is_rigid(p):
    X = to_transform(p)
    R = X[:3, :3]
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1) < 1e-9
    assert np.array_equal(X[3], [0, 0, 0, 1])


@settings(max_examples=N)
@given(poses())
def test_phi_round_trip(p):
    np.testing.assert_allclose(phi(to_transform(p)), p.vector(), atol=1e-9)


@settings(max_examples=N)
@given(transforms(), transforms(), transforms())
def test_group_laws(A, B, C):
    np.testing.assert_allclose(compose(compose(A, B), C), compose(A, compose(B, C)), atol=1e-9)
    np.testing.assert_allclose(compose(A, invert(A)), np.eye(4), atol=1e-9)
    np.testing.assert_allclose(compose(np.eye(4), A), A, atol=1e-12)
    np.testing.assert_allclose(compose(relative(A, B), relative(B, C)), relative(A, C), atol=1e-9)
    np.testing.assert_allclose(relative(A, B), np.linalg.inv(A) @ B, atol=1e-9)


@settings(max_examples=N)
@given(poses(), poses())
def test_interp_endpoints_and_midpoint_symmetry(a, b):
    assert _same_pose(interp_pose(a, b, 0.0), a)
    assert _same_pose(interp_pose(a, b, 1.0), b, tol=1e-8)
    m1, m2 = interp_pose(a, b, 0.5), interp_pose(b, a, 0.5)
    np.testing.assert_allclose(m1.t, m2.t, atol=1e-9)
    # away from the half-turn cut the geodesic midpoint is unique
    if np.linalg.norm(rot_diff(a.r, b.r)) < np.pi - 1e-3:
        np.testing.assert_allclose(so3_exp(m1.r), so3_exp(m2.r), atol=1e-8)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")   # scipy's norm estimator inside logm
@settings(max_examples=N)
@given(rotvecs(), rotvecs())
def test_rot_diff_matches_logm(ra, rb):
    d = rot_diff(ra, rb)
    assert np.linalg.norm(d) <= np.pi + 1e-12
    Rrel = so3_exp(ra).T @ so3_exp(rb)
    np.testing.assert_allclose(so3_exp(d), Rrel, atol=1e-9)
    if np.linalg.norm(d) < np.pi - 1e-3:
        np.testing.assert_allclose(d, _logm_vec(Rrel), atol=1e-8)


@settings(max_examples=N)
@given(st.tuples(st.floats(-3.1, 3.1), st.floats(-1.5, 1.5), st.floats(-3.1, 3.1)))
def test_rpy_round_trip(rpy):
    np.testing.assert_allclose(roll_pitch_yaw(rotation_from_rpy(rpy)), rpy, atol=1e-9)


@settings(max_examples=N)
@given(poses(), st.tuples(*[st.floats(-0.5, 0.5)] * 6).map(np.array))
def test_retract_is_right_composition(p, d):
    out = retract(p.vector(), d)
    np.testing.assert_allclose(out[:3], p.t + d[:3], atol=1e-12)
    np.testing.assert_allclose(so3_exp(out[3:]), so3_exp(p.r) @ so3_exp(d[3:]), atol=1e-9)
