import math

import numpy as np
import numpy.testing as npt
import pytest

from trajgen.geometry import (
    NoiseFilter,
    Pose,
    Trajectory,
    filter_noise,
    from_offsets,
    initial_pose,
    normalize_heading_up,
    point_headings,
    to_frame,
    to_offsets,
    to_world,
    wrap_angle,
)

from conftest import random_trajectory


def rotate(points, angle, about=(0.0, 0.0)):
    c, s = math.cos(angle), math.sin(angle)
    rmat = np.array([[c, -s], [s, c]])
    return (np.asarray(points) - about) @ rmat.T + about


class TestWrapAngle:
    def test_half_open_interval(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
        assert wrap_angle(0.0) == 0.0

    def test_array(self):
        out = wrap_angle(np.array([0.0, 2 * math.pi, -3 * math.pi]))
        npt.assert_allclose(out, [0.0, 0.0, math.pi], atol=1e-12)


class TestTrajectory:
    def test_validation(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((1, 2)))
        with pytest.raises(ValueError):
            Trajectory(np.array([[0.0, 0.0], [np.nan, 1.0]]))
        with pytest.raises(ValueError):
            Trajectory(np.zeros((3, 2)), rate_hz=0.0)


class TestToOffsets:
    def test_straight_line(self):
        t = Trajectory(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]]))
        offs = to_offsets(t)
        # first offset anchors the derived heading, theta is 0 by construction
        npt.assert_allclose(offs, [[1.0, 0.0], [1.0, 0.0]], atol=1e-12)

    def test_right_angle_right_turn(self):
        t = Trajectory(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        offs = to_offsets(t)
        # positive theta = left turn, so a right turn is -pi/2
        npt.assert_allclose(offs[-1], [1.0, -math.pi / 2], atol=1e-12)

    def test_requires_three_points_without_heading(self):
        t = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            to_offsets(t)
        offs = to_offsets(t, initial_heading=0.0)
        npt.assert_allclose(offs, [[1.0, 0.0]], atol=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            t = random_trajectory(rng)
            angle = rng.uniform(-np.pi, np.pi)
            rotated = Trajectory(rotate(t.points, angle))
            npt.assert_allclose(to_offsets(rotated), to_offsets(t), atol=1e-9)

    def test_duplicate_points_carry_heading(self):
        t = Trajectory(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 1.0]]))
        offs = to_offsets(t)
        npt.assert_allclose(offs[:, 0], [1.0, 0.0, 1.0], atol=1e-12)
        npt.assert_allclose(offs[1], [0.0, 0.0], atol=1e-12)
        npt.assert_allclose(offs[2, 1], -math.pi / 2, atol=1e-12)

    def test_output_ranges(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            offs = to_offsets(random_trajectory(rng))
            assert (offs[:, 0] >= 0).all()
            assert (offs[:, 1] > -math.pi - 1e-12).all()
            assert (offs[:, 1] <= math.pi + 1e-12).all()


class TestFromOffsets:
    def test_straight(self):
        t = from_offsets(Pose(0, 0, math.pi / 2), np.array([[1.0, 0.0], [1.0, 0.0]]))
        npt.assert_allclose(t.points, [[0, 0], [0, 1], [0, 2]], atol=1e-12)

    def test_right_turn_step(self):
        t = from_offsets(Pose(0, 0, math.pi / 2), np.array([[1.0, -math.pi / 2]]))
        npt.assert_allclose(t.points[-1], [1.0, 0.0], atol=1e-12)

    def test_empty_offsets(self):
        with pytest.raises(ValueError):
            from_offsets(Pose(0, 0, 0), np.empty((0, 2)))

    def test_round_trip_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            t = random_trajectory(rng)
            back = from_offsets(initial_pose(t), to_offsets(t))
            npt.assert_allclose(back.points, t.points, atol=1e-9)

    def test_round_trip_with_supplied_heading(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            t = random_trajectory(rng)
            heading = rng.uniform(-np.pi, np.pi)
            offs = to_offsets(t, initial_heading=heading)
            back = from_offsets(Pose(t.points[0, 0], t.points[0, 1], heading), offs)
            npt.assert_allclose(back.points, t.points, atol=1e-9)


class TestNormalizeHeadingUp:
    def test_identity(self):
        t = Trajectory(np.array([[0.0, -1.0], [0.0, 0.0], [0.0, 1.0]]))
        out, anchor = normalize_heading_up(t, 1)
        npt.assert_allclose(out.points, t.points, atol=1e-12)
        assert anchor.heading == pytest.approx(math.pi / 2)

    def test_heading_x_becomes_up(self):
        t = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
        out, anchor = normalize_heading_up(t, 1)
        npt.assert_allclose(out.points[1], [0.0, 0.0], atol=1e-12)
        npt.assert_allclose(out.points[2], [0.0, 1.0], atol=1e-12)
        back = to_world(out.points, anchor)
        npt.assert_allclose(back, t.points, atol=1e-9)

    def test_downward_line_rotates_half_turn(self):
        t = Trajectory(np.array([[0.0, 0.0], [0.0, -1.0], [0.0, -2.0]]))
        out, _ = normalize_heading_up(t, 2)
        # past extends below the origin after normalization
        npt.assert_allclose(out.points, [[0, -2], [0, -1], [0, 0]], atol=1e-9)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            t = random_trajectory(rng)
            idx = int(rng.integers(1, len(t)))
            out, anchor = normalize_heading_up(t, idx)
            npt.assert_allclose(out.points[idx], [0.0, 0.0], atol=1e-9)
            npt.assert_allclose(to_world(out.points, anchor), t.points, atol=1e-9)
            npt.assert_allclose(to_frame(t.points, anchor), out.points, atol=1e-9)

    def test_present_segment_direction_up(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            t = random_trajectory(rng)
            idx = int(rng.integers(1, len(t)))
            out, _ = normalize_heading_up(t, idx)
            seg = out.points[idx] - out.points[idx - 1]
            if np.hypot(*seg) > 1e-12:
                assert abs(seg[0]) < 1e-9 * max(1.0, abs(seg[1]))
                assert seg[1] > 0

    def test_degenerate_present_falls_back(self):
        t = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))
        out, anchor = normalize_heading_up(t, 2)
        assert anchor.heading == pytest.approx(0.0)
        npt.assert_allclose(out.points[2], [0.0, 0.0], atol=1e-12)

    def test_index_bounds(self):
        t = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            normalize_heading_up(t, 0)
        with pytest.raises(ValueError):
            normalize_heading_up(t, 2)


class TestPointHeadings:
    def test_first_copies_first_segment(self):
        t = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))
        h = point_headings(t)
        npt.assert_allclose(h, [0.0, 0.0, math.pi / 2], atol=1e-12)


class TestFilterNoise:
    def test_paper_thresholds(self):
        offs = np.array([[0.004, 0.6]])
        assert len(filter_noise(offs)) == 0

    def test_moving_sharp_turn_kept(self):
        offs = np.array([[1.0, 0.6]])
        assert len(filter_noise(offs)) == 1

    def test_still_straight_kept(self):
        offs = np.array([[0.001, 0.1]])
        assert len(filter_noise(offs)) == 1

    def test_empty(self):
        assert len(filter_noise(np.empty((0, 2)))) == 0

    def test_order_preserved(self):
        offs = np.array([[1.0, 0.0], [0.001, 1.0], [2.0, 0.2]])
        out = filter_noise(offs)
        npt.assert_allclose(out, [[1.0, 0.0], [2.0, 0.2]])

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            filter_noise(np.zeros((1, 2)), rho_min=-1.0)
        with pytest.raises(ValueError):
            NoiseFilter(theta_max=-0.1)
