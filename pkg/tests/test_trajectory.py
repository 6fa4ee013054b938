import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncloc.errors import InvalidConfig, InvalidRotation, OutOfRange, OutOfSupport, TooShort
from syncloc.geometry import exp_so3, geodesic_deg, is_rotation
from syncloc.trajectory import (
    ControlSpline,
    TimedPose,
    Trajectory,
    finite_difference_velocities,
    generate_spline,
    interpolate,
    interpolate_many,
    sample_at,
    sample_pose,
    sample_trajectory,
    shift_trajectory,
)


@pytest.fixture(scope="module")
def spline():
    return generate_spline(40, 0.5, 1.0, seed=7)


def test_generate_defaults(spline):
    assert spline.num_control == 40
    assert spline.knot == 1.0
    assert spline.support == (0.0, 37.0)
    steps = np.linalg.norm(np.diff(spline.translations, axis=0), axis=1)
    assert steps.max() <= 0.5
    angles = [geodesic_deg(a, b) for a, b in zip(spline.rotations[:-1], spline.rotations[1:])]
    assert max(angles) <= np.rad2deg(0.5) + 1e-9


def test_generate_rejects_short():
    with pytest.raises(InvalidConfig):
        generate_spline(3, 0.5, 1.0, seed=0)
    with pytest.raises(InvalidConfig):
        generate_spline(10, 0.0, 1.0, seed=0)


def test_generate_deterministic():
    a = generate_spline(seed=3)
    b = generate_spline(seed=3)
    assert np.array_equal(a.translations, b.translations)
    assert np.array_equal(a.rotations, b.rotations)
    c = generate_spline(seed=4)
    assert not np.array_equal(a.translations, c.translations)


def test_constant_spline_is_static(rng):
    R = exp_so3(rng.standard_normal(3))
    s = ControlSpline(np.repeat(R[None], 6, axis=0), np.tile([1.0, 2.0, 3.0], (6, 1)), 0.5)
    for t in rng.uniform(*s.support, 20):
        pose = sample_pose(s, t)
        assert np.allclose(pose.translation, [1, 2, 3], atol=1e-14)
        assert np.allclose(pose.velocity, 0, atol=1e-14)
        assert np.allclose(pose.rotation, R, atol=1e-12)


def test_velocity_matches_finite_difference(spline, rng):
    h = 1e-4
    lo, hi = spline.support
    for t in rng.uniform(lo + h, hi - h, 100):
        v = sample_pose(spline, t).velocity
        fd = (sample_pose(spline, t + h).translation - sample_pose(spline, t - h).translation) / (2 * h)
        assert np.abs(v - fd).max() < 1e-5


def test_spline_is_continuous_across_knots(spline):
    for k in range(1, 10):
        a = sample_pose(spline, k - 1e-9)
        b = sample_pose(spline, k + 1e-9)
        assert np.abs(a.translation - b.translation).max() < 1e-8
        assert np.abs(a.velocity - b.velocity).max() < 1e-7
        assert geodesic_deg(a.rotation, b.rotation) < 1e-6


def test_sample_pose_out_of_support(spline):
    with pytest.raises(OutOfSupport):
        sample_pose(spline, 37.5)
    with pytest.raises(OutOfSupport):
        sample_pose(spline, -0.1)


def test_sample_trajectory_defaults(spline):
    traj = sample_trajectory(spline, 0.0, 0.005, 4000)
    assert len(traj) == 4000
    assert np.abs(np.diff(traj.timestamps) - 0.005).max() < 1e-12
    assert all(is_rotation(R) for R in traj.rotations[::97])


def test_sample_trajectory_two_poses(spline):
    traj = sample_trajectory(spline, 1.0, 0.25, 2)
    assert np.array_equal(traj.timestamps, [1.0, 1.25])
    assert np.array_equal(traj.translations[1], sample_pose(spline, 1.25).translation)


def test_sample_trajectory_outside_support(spline):
    with pytest.raises(OutOfSupport):
        sample_trajectory(spline, 30.0, 0.01, 1000)


def test_sampling_deterministic():
    a = sample_trajectory(generate_spline(seed=11), 0.0, 0.005, 500)
    b = sample_trajectory(generate_spline(seed=11), 0.0, 0.005, 500)
    assert np.array_equal(a.translations, b.translations)
    assert np.array_equal(a.rotations, b.rotations)
    assert np.array_equal(a.velocities, b.velocities)


def test_trajectory_invariants():
    R = np.repeat(np.eye(3)[None], 3, axis=0)
    z = np.zeros((3, 3))
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0, 1.0], R, z, z)
    with pytest.raises(TooShort):
        Trajectory([0.0], R[:1], z[:1], z[:1])
    bad = R.copy()
    bad[1] = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(InvalidRotation):
        Trajectory([0.0, 1.0, 2.0], bad, z, z)
    traj = Trajectory([0.0, 1.0, 2.0], R, z, z)
    with pytest.raises(ValueError):
        traj.translations[0, 0] = 1.0


def test_timed_pose_validation():
    with pytest.raises(InvalidRotation):
        TimedPose(0.0, 2 * np.eye(3), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        TimedPose(0.0, np.eye(3), [np.inf, 0, 0], np.zeros(3))


def test_from_poses_round_trip(spline):
    traj = sample_trajectory(spline, 0.0, 0.1, 20)
    again = Trajectory.from_poses([traj[k] for k in range(len(traj))])
    assert np.array_equal(again.translations, traj.translations)
    assert np.array_equal(again.timestamps, traj.timestamps)


def test_shift_zero_and_inverse(spline):
    traj = sample_trajectory(spline, 0.0, 0.005, 200)
    same = shift_trajectory(traj, 0.0)
    assert np.array_equal(same.timestamps, traj.timestamps)
    back = shift_trajectory(shift_trajectory(traj, 0.37), -0.37)
    assert np.abs(back.timestamps - traj.timestamps).max() < 1e-15
    shifted = shift_trajectory(traj, 0.37)
    assert np.array_equal(shifted.translations, traj.translations)
    assert np.array_equal(shifted.rotations, traj.rotations)
    assert np.array_equal(np.diff(shifted.timestamps), np.diff(traj.timestamps - 0.37))
    assert np.allclose(shifted.timestamps, traj.timestamps - 0.37, atol=0)


@given(st.floats(-5, 5, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_shift_preserves_pose_content(delta):
    traj = sample_trajectory(generate_spline(seed=1), 0.0, 0.01, 50)
    s = shift_trajectory(traj, delta)
    assert np.array_equal(s.translations, traj.translations)
    assert np.array_equal(s.timestamps, traj.timestamps - delta)


def test_interpolate_exact_at_samples(spline):
    traj = sample_trajectory(spline, 0.0, 0.005, 100)
    for k in (0, 1, 50, 99):
        pose = interpolate(traj, traj.timestamps[k])
        assert np.array_equal(pose.translation, traj.translations[k])
        assert np.array_equal(pose.rotation, traj.rotations[k])
        assert np.array_equal(pose.velocity, traj.velocities[k])


def test_interpolate_midpoint():
    R = np.repeat(np.eye(3)[None], 2, axis=0)
    traj = Trajectory([0.0, 1.0], R, [[0, 0, 0], [2, 0, 0]], [[0, 0, 0], [2, 0, 0]])
    pose = interpolate(traj, 0.5)
    assert np.allclose(pose.translation, [1, 0, 0])
    assert np.allclose(pose.velocity, [1, 0, 0])


def test_interpolate_slerp_midpoint(rng):
    R1 = exp_so3([0.0, 0.0, 1.0])
    traj = Trajectory([0.0, 1.0], [np.eye(3), R1], np.zeros((2, 3)), np.zeros((2, 3)))
    assert np.allclose(interpolate(traj, 0.5).rotation, exp_so3([0.0, 0.0, 0.5]), atol=1e-12)


def test_interpolate_against_dense_spline(spline, rng):
    traj = sample_trajectory(spline, 0.0, 0.005, 4000)
    times = rng.uniform(traj.t_start, traj.t_end, 200)
    _, p, _ = interpolate_many(traj, times)
    truth = sample_at(spline, np.sort(times))
    order = np.argsort(times)
    assert np.linalg.norm(p[order] - truth.translations, axis=1).max() < 1e-4


def test_interpolate_out_of_range(spline):
    traj = sample_trajectory(spline, 0.0, 0.005, 100)
    with pytest.raises(OutOfRange):
        interpolate(traj, -1e-3)
    with pytest.raises(OutOfRange):
        interpolate(traj, traj.t_end + 1e-3)


def test_finite_difference_linear_motion():
    t = np.linspace(0.0, 2.0, 21)
    p = np.outer(t, [1.0, -2.0, 0.5]) + [3, 4, 5]
    R = np.repeat(np.eye(3)[None], len(t), axis=0)
    traj = finite_difference_velocities(Trajectory(t, R, p, np.zeros_like(p)))
    assert np.abs(traj.velocities - [1.0, -2.0, 0.5]).max() < 1e-10


def test_finite_difference_too_short():
    R = np.repeat(np.eye(3)[None], 2, axis=0)
    with pytest.raises(TooShort):
        finite_difference_velocities(Trajectory([0.0, 1.0], R, np.zeros((2, 3)), np.zeros((2, 3))))


def test_finite_difference_against_analytic(spline):
    traj = sample_trajectory(spline, 0.0, 0.005, 4000)
    fd = finite_difference_velocities(traj)
    err = np.abs(fd.velocities[1:-1] - traj.velocities[1:-1]).max()
    assert err < 1e-3
