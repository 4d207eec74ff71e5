import math

import numpy as np
import pytest

from aclearn.errors import ArgumentError, ConfigurationError
from aclearn.simulators import (
    CANVAS,
    HarmonicOscillatorSpec,
    PIVOT,
    TimeSeriesGroup,
    TrapezoidSkeletonSpec,
    mirror_joints,
    oscillator,
    render_pendulum_frame,
    render_skeleton_frame,
    sample_pendulum_batch,
    sample_pendulum_trajectory,
    sample_skeleton_batch,
    sample_skeleton_trajectory,
    sample_timeseries_labels,
    skeleton_pose,
    write_dump_csv,
)


def test_oscillator_values():
    y = oscillator(1.0, 12.0, 0.0, 5)
    assert y[0] == 0.0
    assert y[3] == pytest.approx(1.0, abs=1e-15)


def test_pendulum_trajectory_shape_and_bounds(rng):
    spec = HarmonicOscillatorSpec(amplitude=2.0, length=7)
    y = sample_pendulum_trajectory(spec, rng)
    assert y.shape == (7, 1)
    assert np.all(np.abs(y) <= 2.0)


def test_pendulum_period_statistics():
    _, periods, _ = sample_pendulum_batch(HarmonicOscillatorSpec(), np.random.default_rng(0), 10_000,
                                          return_params=True)
    assert periods.min() >= 10 and periods.max() <= 14
    assert abs(periods.mean() - 12.0) < 0.1


def test_pendulum_spec_validation():
    with pytest.raises(ArgumentError):
        HarmonicOscillatorSpec(period_min=14, period_max=10)
    with pytest.raises(ArgumentError):
        HarmonicOscillatorSpec(amplitude=0.0)
    with pytest.raises(ArgumentError):
        HarmonicOscillatorSpec(length=1)


def test_samplers_reproducible():
    a = sample_pendulum_batch(HarmonicOscillatorSpec(), np.random.default_rng(3), 20)
    b = sample_pendulum_batch(HarmonicOscillatorSpec(), np.random.default_rng(3), 20)
    assert np.array_equal(a, b)
    s = TrapezoidSkeletonSpec()
    assert np.array_equal(sample_skeleton_batch(s, np.random.default_rng(4), 5),
                          sample_skeleton_batch(s, np.random.default_rng(4), 5))


def ball_centroid(img):
    rows, cols = np.mgrid[0:CANVAS, 0:CANVAS]
    mask = rows >= 6  # drop the pivot
    w = img * mask
    return (w * rows).sum() / w.sum(), (w * cols).sum() / w.sum()


def test_pendulum_frame_at_rest_is_bottom_centre():
    cy, cx = ball_centroid(render_pendulum_frame(0.0))
    assert abs(cx - (CANVAS - 1) / 2) <= 1.0
    assert cy > CANVAS / 2


def test_pendulum_frames_mirror():
    for angle in (0.1, 0.4, 0.9):
        np.testing.assert_allclose(render_pendulum_frame(angle), render_pendulum_frame(-angle)[:, ::-1],
                                   atol=1e-12)


def test_pendulum_centroid_recovers_angle():
    # beyond about 0.67 rad the ball starts to leave the canvas
    for angle in np.linspace(-0.65, 0.65, 27):
        cy, cx = ball_centroid(render_pendulum_frame(angle))
        recovered = math.atan2(cx - PIVOT[1], cy - PIVOT[0])
        assert abs(math.degrees(recovered - angle)) < 2.0


def test_pendulum_rejects_non_finite():
    with pytest.raises(ArgumentError):
        render_pendulum_frame(float("nan"))


def test_closed_pose_is_rectangle():
    spec = TrapezoidSkeletonSpec()
    pts = skeleton_pose(spec, 0.0, math.radians(40)).reshape(6, 2)
    assert pts[0, 0] == pts[2, 0] and pts[3, 0] == pts[5, 0]  # feet under hips
    assert pts[3, 0] - pts[0, 0] == pytest.approx(spec.hip_width)
    assert pts[5, 0] - pts[2, 0] == pytest.approx(spec.hip_width)


def test_skeleton_mirror_symmetry_without_noise(rng):
    spec = TrapezoidSkeletonSpec(noise=0.0)
    traj = sample_skeleton_trajectory(spec, rng).reshape(-1, 2, 3, 2)
    cx = spec.center[0]
    np.testing.assert_allclose(traj[:, 0, :, 0] - cx, -(traj[:, 1, :, 0] - cx), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(traj[:, 0, :, 1], traj[:, 1, :, 1])


def test_skeleton_feet_separation_non_decreasing():
    spec = TrapezoidSkeletonSpec(noise=0.0, n_frames=8)
    batch = sample_skeleton_batch(spec, np.random.default_rng(0), 1000).reshape(1000, 8, 12)
    separation = batch[:, :, 10] - batch[:, :, 4]
    assert np.all(np.diff(separation, axis=1) >= -1e-12)


def test_skeleton_within_canvas_before_noise():
    spec = TrapezoidSkeletonSpec(noise=0.0)
    batch = sample_skeleton_batch(spec, np.random.default_rng(1), 1000)
    assert batch.min() >= 0 and batch.max() <= CANVAS - 1


def test_skeleton_noise_applied(rng):
    spec = TrapezoidSkeletonSpec(noise=0.5)
    a = sample_skeleton_trajectory(spec, rng)
    assert a.shape == (spec.n_frames, 12)


def test_skeleton_spec_validation():
    with pytest.raises(ArgumentError):
        TrapezoidSkeletonSpec(joints=5)
    with pytest.raises(ArgumentError):
        TrapezoidSkeletonSpec(hip_width=-1.0)


def test_degenerate_pose_renders_centre_blob():
    c = (CANVAS - 1) / 2
    img, clamped = render_skeleton_frame([c, c] * 6)
    assert not clamped
    rows, cols = np.nonzero(img > 0.5)
    assert abs(rows.mean() - c) < 0.5 and abs(cols.mean() - c) < 0.5
    assert rows.max() - rows.min() <= 4


def test_skeleton_mirror_image():
    spec = TrapezoidSkeletonSpec()
    pose = skeleton_pose(spec, 0.6, math.radians(35), center=(14.0, 8.0))
    img, _ = render_skeleton_frame(pose)
    mirrored, _ = render_skeleton_frame(mirror_joints(pose))
    np.testing.assert_allclose(mirrored, img[:, ::-1], atol=1e-12)


def test_skeleton_joint_centroids():
    spec = TrapezoidSkeletonSpec()
    rows, cols = np.mgrid[0:CANVAS, 0:CANVAS]
    for phase in (0.5, 0.8, 1.0):
        pose = skeleton_pose(spec, phase, math.radians(40)).reshape(6, 2)
        img, _ = render_skeleton_frame(pose.reshape(-1))
        for x, y in pose:
            near = ((rows - y) ** 2 + (cols - x) ** 2 <= 2.0**2) * img
            cy, cx = (near * rows).sum() / near.sum(), (near * cols).sum() / near.sum()
            assert math.hypot(cx - x, cy - y) < 1.5


def test_skeleton_clamping_flag():
    _, clamped = render_skeleton_frame([40.0, 5.0] + [10.0, 10.0] * 5)
    assert clamped


def _group(temp, hum, complete=True):
    v = np.zeros((7, 4))
    v[:, :2] = temp
    v[:, 2:] = hum if complete else np.nan
    return TimeSeriesGroup(v, complete)


def test_timeseries_labels_all_complete_uniform():
    groups = [_group(i, 100 + i) for i in range(4)]
    out = sample_timeseries_labels(groups, np.random.default_rng(0), 8000)
    for src in (out.temperature_source, out.humidity_source):
        freq = np.bincount(src, minlength=4) / 8000
        assert np.all(np.abs(freq - 0.25) < 0.02)
    assert np.array_equal(out.temperature_source, out.humidity_source)
    rows = out.labels.reshape(-1, 2, 4)
    assert np.array_equal(rows[:, 0, 0], out.temperature_source.astype(float))


def test_timeseries_single_complete_group_supplies_all_humidity():
    groups = [_group(0, 50)] + [_group(i, 0, complete=False) for i in range(1, 4)]
    out = sample_timeseries_labels(groups, np.random.default_rng(1), 500)
    assert set(out.humidity_source) == {0}
    assert np.all(out.labels.reshape(-1, 2, 4)[:, :, 2:] == 50)


def test_timeseries_humidity_support_is_complete_set():
    rng = np.random.default_rng(2)
    complete = rng.permutation(10)[:5]
    groups = [_group(i, 10 * i, complete=i in complete) for i in range(10)]
    out = sample_timeseries_labels(groups, np.random.default_rng(3), 10_000)
    assert set(out.humidity_source) == set(complete.tolist())
    assert set(out.temperature_source) == set(range(10))
    freq = np.bincount(out.humidity_source, minlength=10)[complete] / 10_000
    assert np.all(np.abs(freq - 0.2) < 0.02)


def test_timeseries_needs_complete_group():
    with pytest.raises(ConfigurationError):
        sample_timeseries_labels([_group(0, 0, complete=False)], np.random.default_rng(0), 4)


def test_group_validation():
    with pytest.raises(ArgumentError):
        TimeSeriesGroup(np.full((7, 4), np.nan), complete=False)
    with pytest.raises(ArgumentError):
        _group(1.0, np.nan, complete=True)


def test_dump_csv(tmp_path):
    traj = np.arange(12, dtype=float).reshape(2, 3, 2)
    path = tmp_path / "dump.csv"
    write_dump_csv(path, traj, ["a", "b"], images=np.ones((2, 3, 4)))
    lines = path.read_text().splitlines()
    assert lines[0] == "trajectory,frame,a,b,px0,px1,px2,px3"
    assert lines[1] == "0,0,0.0,1.0,1.0,1.0,1.0,1.0"
    assert len(lines) == 7
