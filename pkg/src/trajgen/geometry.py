"""Canonical trajectory representation and polar-offset conversions.

A trajectory is an ordered sequence of 2-D world points sampled at a fixed
rate. Motion between consecutive points is expressed as polar offsets
(rho, theta): distance travelled and signed heading change in the vehicle
frame. Offsets are rotation invariant, which is what makes them usable as
a Markov-chain alphabet.

Conventions (fixed, asserted in tests):
  * angles are radians everywhere; positive theta = counterclockwise (left turn)
  * heading at index k is the direction of segment (k-1 -> k); index 0
    copies segment (0 -> 1); zero-length segments inherit the previous heading
  * theta is wrapped into (-pi, pi]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Default offset-noise thresholds: a near-still vehicle reporting a sharp
# turn is GPS/IMU noise, not motion.
RHO_STILL = 0.005
THETA_SHARP = 0.5


def wrap_angle(theta):
    """Wrap angle(s) into (-pi, pi]."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(theta, dtype=np.float64), TWO_PI)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass
class Trajectory:
    """Ordered (x, y) points in meters at a fixed sampling rate."""

    points: np.ndarray
    rate_hz: float = 10.0

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"points must be (N, 2), got {self.points.shape}")
        if len(self.points) < 2:
            raise ValueError("a trajectory needs at least 2 points")
        if not np.isfinite(self.points).all():
            raise ValueError("trajectory coordinates must be finite")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def duration(self) -> float:
        return (len(self.points) - 1) / self.rate_hz


@dataclass(frozen=True)
class PolarOffset:
    """One motion step: rho meters forward, theta radians of heading change."""

    rho: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.rho) and self.rho >= 0.0):
            raise ValueError("rho must be finite and non-negative")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class Pose:
    """A position plus heading (math convention, ccw from +x)."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def validate_offsets(offsets: np.ndarray) -> np.ndarray:
    """Coerce to an (N, 2) float array of [rho, theta] rows and check invariants."""
    arr = np.ascontiguousarray(offsets, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"offsets must be (N, 2) [rho, theta], got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("offsets must be finite")
    if (arr[:, 0] < 0).any():
        raise ValueError("rho must be non-negative")
    return arr


def _segment_headings(points: np.ndarray, seed_heading: float | None) -> tuple[np.ndarray, float]:
    """Heading of each segment, with zero-length segments inheriting the
    previous segment's heading. Returns (per-segment headings, start heading)."""
    deltas = np.diff(points, axis=0)
    rho = np.hypot(deltas[:, 0], deltas[:, 1])
    raw = np.arctan2(deltas[:, 1], deltas[:, 0])
    nonzero = rho > 0.0

    if seed_heading is None:
        start = float(raw[np.argmax(nonzero)]) if nonzero.any() else 0.0
    else:
        start = float(seed_heading)

    # Forward-fill headings over zero-length segments.
    last_nz = np.where(nonzero, np.arange(len(rho)), -1)
    np.maximum.accumulate(last_nz, out=last_nz)
    headings = np.where(last_nz >= 0, raw[np.maximum(last_nz, 0)], start)
    return headings, start


def point_headings(traj: Trajectory) -> np.ndarray:
    """Heading at every trajectory index under the segment convention."""
    seg, start = _segment_headings(traj.points, None)
    return np.concatenate([[start], seg])


def to_offsets(traj: Trajectory, initial_heading: float | None = None) -> np.ndarray:
    """Convert a trajectory into its (N-1, 2) polar offset sequence.

    With no ``initial_heading`` the first segment's direction is taken as the
    start heading (requires >= 3 points; the first offset then has theta 0).
    Rigidly rotating the input leaves the output unchanged.
    """
    minimum = 2 if initial_heading is not None else 3
    if len(traj) < minimum:
        raise ValueError(
            f"need at least {minimum} points "
            f"({'with' if initial_heading is not None else 'without'} an initial heading)"
        )
    deltas = np.diff(traj.points, axis=0)
    rho = np.hypot(deltas[:, 0], deltas[:, 1])
    seg, start = _segment_headings(traj.points, initial_heading)
    prev = np.concatenate([[start], seg[:-1]])
    theta = wrap_angle(seg - prev)
    theta[rho == 0.0] = 0.0
    return np.column_stack([rho, theta])


def from_offsets(start: Pose, offsets: np.ndarray) -> Trajectory:
    """Reconstruct a trajectory by accumulating offsets from a start pose.

    Point k+1 is point k displaced by rho_k along heading h_k + theta_k, and
    the heading state advances to h_k + theta_k. Exact inverse of
    :func:`to_offsets` given the matching start pose.
    """
    offs = validate_offsets(offsets)
    if len(offs) == 0:
        raise ValueError("offsets must be non-empty")
    headings = start.heading + np.cumsum(offs[:, 1])
    steps = offs[:, 0][:, None] * np.column_stack([np.cos(headings), np.sin(headings)])
    points = np.empty((len(offs) + 1, 2), dtype=np.float64)
    points[0] = (start.x, start.y)
    np.cumsum(steps, axis=0, out=points[1:])
    points[1:] += points[0]
    return Trajectory(points)


def initial_pose(traj: Trajectory) -> Pose:
    """Pose at the first point, heading derived from the first (nonzero)
    segment; ``from_offsets(initial_pose(t), to_offsets(t))`` reproduces t."""
    seg, start = _segment_headings(traj.points, None)
    return Pose(traj.points[0, 0], traj.points[0, 1], start)


def end_pose(start: Pose, offsets: np.ndarray) -> Pose:
    """Pose after applying all offsets from ``start``."""
    offs = validate_offsets(offsets)
    traj = from_offsets(start, offs)
    heading = start.heading + float(np.sum(offs[:, 1]))
    return Pose(traj.points[-1, 0], traj.points[-1, 1], heading)


def normalize_heading_up(traj: Trajectory, present_index: int) -> tuple[Trajectory, Pose]:
    """Rigidly move the present point to the origin with its heading up (+y).

    Returns the transformed trajectory and the anchor pose (world position
    and heading of the present) that inverts the transform.
    """
    if not 0 < present_index < len(traj):
        raise ValueError(f"present_index {present_index} out of range (0, {len(traj)})")
    heading = float(point_headings(traj)[present_index])
    center = traj.points[present_index]
    rot = math.pi / 2.0 - heading
    c, s = math.cos(rot), math.sin(rot)
    rmat = np.array([[c, -s], [s, c]])
    out = (traj.points - center) @ rmat.T
    return Trajectory(out, traj.rate_hz), Pose(center[0], center[1], heading)


def to_world(points: np.ndarray, anchor: Pose) -> np.ndarray:
    """Map heading-up-frame points back to world coordinates (inverse of
    :func:`normalize_heading_up` for the returned anchor)."""
    rot = anchor.heading - math.pi / 2.0
    c, s = math.cos(rot), math.sin(rot)
    rmat = np.array([[c, -s], [s, c]])
    return np.asarray(points, dtype=np.float64) @ rmat.T + anchor.position


def to_frame(points: np.ndarray, anchor: Pose) -> np.ndarray:
    """Map world points into the heading-up frame of ``anchor``."""
    rot = math.pi / 2.0 - anchor.heading
    c, s = math.cos(rot), math.sin(rot)
    rmat = np.array([[c, -s], [s, c]])
    return (np.asarray(points, dtype=np.float64) - anchor.position) @ rmat.T


@dataclass(frozen=True)
class NoiseFilter:
    """Thresholds for dropping still-but-turning noise offsets."""

    rho_min: float = RHO_STILL
    theta_max: float = THETA_SHARP

    def __post_init__(self):
        if self.rho_min < 0 or self.theta_max < 0:
            raise ValueError("filter thresholds must be non-negative")


def filter_noise(offsets: np.ndarray, rho_min: float = RHO_STILL,
                 theta_max: float = THETA_SHARP) -> np.ndarray:
    """Drop offsets that are both near-still and sharply turning.

    Only the conjunction (rho < rho_min AND |theta| > theta_max) filters;
    slow straight motion and fast turns are kept. Order is preserved.
    """
    if rho_min < 0 or theta_max < 0:
        raise ValueError("filter thresholds must be non-negative")
    offs = validate_offsets(offsets)
    drop = (offs[:, 0] < rho_min) & (np.abs(offs[:, 1]) > theta_max)
    return offs[~drop]
