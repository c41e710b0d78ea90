"""Procedural semantic context maps built around generated trajectories.

Roads are born from paths: a scene starts from a chain-sampled backbone
trajectory, gets a thick road stroke, branch roads forked off random
anchor points, optional disconnected "unreachable" roads, sidewalks with
optional width jitter, and simulated far-range LiDAR dropout near map
borders.

Maps are single-channel uint8 grids (one class per pixel) with a fixed
precedence road > sidewalk > background, at 0.5 m/px by default.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from trajgen import kernels
from trajgen.chain import MarkovChain, sample_offsets
from trajgen.geometry import (
    Pose,
    Trajectory,
    from_offsets,
    point_headings,
    wrap_angle,
)
from trajgen.seeds import substream

log = logging.getLogger(__name__)

BACKGROUND = 0
ROAD = 1
SIDEWALK = 2

# False-color palette for rendered maps (RGB).
CLASS_COLORS = np.array(
    [
        [0, 0, 0],        # background: black
        [128, 0, 128],    # road: purple
        [255, 182, 193],  # sidewalk: pink
    ],
    dtype=np.uint8,
)


@dataclass
class SemanticMap:
    """Per-pixel class grid with a world anchoring.

    ``origin`` is the world (x, y) of the outer corner of pixel (0, 0)
    (top-left); world y grows upward, rows grow downward.
    """

    classes: np.ndarray
    resolution: float = 0.5
    origin: tuple[float, float] = (0.0, 0.0)
    background_fill: int = 0  # out-of-source pixels filled during cropping

    def __post_init__(self):
        self.classes = np.ascontiguousarray(self.classes, dtype=np.uint8)
        if self.classes.ndim != 2:
            raise ValueError("classes must be a 2-D grid")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.classes.max(initial=0) > SIDEWALK:
            raise ValueError("class ids must be in {0, 1, 2}")

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def extent_m(self) -> tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def copy(self) -> "SemanticMap":
        return SemanticMap(self.classes.copy(), self.resolution, self.origin,
                           self.background_fill)

    def world_to_pixel_f(self, points) -> np.ndarray:
        """Continuous (row, col) pixel coordinates of world points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        x0, y_top = self.origin
        col = (pts[:, 0] - x0) / self.resolution
        row = (y_top - pts[:, 1]) / self.resolution
        return np.column_stack([row, col])

    def world_to_pixel(self, points) -> np.ndarray:
        """Integer (row, col) indices of the pixels containing world points."""
        return np.floor(self.world_to_pixel_f(points)).astype(np.int64)

    def contains(self, points) -> np.ndarray:
        rc = self.world_to_pixel(points)
        return ((rc[:, 0] >= 0) & (rc[:, 0] < self.height)
                & (rc[:, 1] >= 0) & (rc[:, 1] < self.width))

    def classes_at(self, points) -> np.ndarray:
        """Class id under each world point; background for out-of-map points."""
        rc = self.world_to_pixel(points)
        inside = ((rc[:, 0] >= 0) & (rc[:, 0] < self.height)
                  & (rc[:, 1] >= 0) & (rc[:, 1] < self.width))
        out = np.zeros(len(rc), dtype=np.uint8)
        out[inside] = self.classes[rc[inside, 0], rc[inside, 1]]
        return out

    def one_hot(self) -> np.ndarray:
        """(H, W, 3) float32 one-hot encoding (background, road, sidewalk)."""
        eye = np.eye(3, dtype=np.float32)
        return eye[self.classes]

    def to_color(self) -> np.ndarray:
        """(H, W, 3) uint8 false-color image of the class grid."""
        return CLASS_COLORS[self.classes]


@dataclass(frozen=True)
class MapGenConfig:
    """Scene-construction knobs. Widths in meters, canvas in pixels."""

    lane_width: float = 6.0
    sidewalk_width: float = 1.5
    branching_factor_max: int = 5
    double_width_prob: float = 0.5
    unreachable_roads: bool = True
    lidar_noise: bool = True
    sidewalk_jitter: bool = True
    canvas: int = 720
    resolution: float = 0.5
    lidar_intensity: float = 0.5

    def __post_init__(self):
        if self.lane_width <= 0 or self.sidewalk_width <= 0:
            raise ValueError("widths must be positive")
        if self.branching_factor_max < 1:
            raise ValueError("branching_factor_max must be >= 1")
        for p in (self.double_width_prob, self.lidar_intensity):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must be in [0, 1]")
        if self.canvas < 2 or self.resolution <= 0:
            raise ValueError("invalid canvas geometry")


def blank_canvas(cfg: MapGenConfig) -> SemanticMap:
    """All-background working canvas centered on world (0, 0)."""
    half = cfg.canvas * cfg.resolution / 2.0
    classes = np.zeros((cfg.canvas, cfg.canvas), dtype=np.uint8)
    return SemanticMap(classes, cfg.resolution, (-half, half))


def _decimate_polyline(points: np.ndarray, max_turn: float = 0.1,
                       max_len: float = 12.0) -> np.ndarray:
    """Drop near-collinear vertices before rasterization.

    Runs are cut when the accumulated turn or chord length would let the
    chord deviate more than ~max_len * max_turn / 8 (0.15 m at defaults)
    from the original polyline - well under half a pixel, and a tiny
    fraction of the stroke margin around trajectory points. Straight lines
    simplify exactly, so pixel-level stroke oracles are unaffected.
    """
    if len(points) <= 2:
        return points
    deltas = np.diff(points, axis=0)
    seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
    ang = np.arctan2(deltas[:, 1], deltas[:, 0])
    turn = np.abs(wrap_angle(np.diff(ang)))
    turn[seg_len[1:] == 0.0] = 0.0
    cum_turn = np.concatenate([[0.0], np.cumsum(turn)])       # per segment
    cum_len = np.concatenate([[0.0], np.cumsum(seg_len)])     # per vertex
    keep = np.empty(len(points), dtype=np.int64)
    count = kernels.decimate_runs(cum_turn, cum_len, max_turn, max_len, keep)
    return points[np.unique(keep[:count])]


def _path_segments_px(smap: SemanticMap, points: np.ndarray):
    """Polyline segments in pixel units (x right, y down)."""
    x0, y_top = smap.origin
    px = (points[:, 0] - x0) / smap.resolution
    py = (y_top - points[:, 1]) / smap.resolution
    ax = np.ascontiguousarray(px[:-1])
    ay = np.ascontiguousarray(py[:-1])
    bx = np.ascontiguousarray(px[1:])
    by = np.ascontiguousarray(py[1:])
    return ax, ay, bx, by


def _outside_canvas(smap: SemanticMap, points: np.ndarray, margin_px: float) -> bool:
    rc = smap.world_to_pixel_f(points)
    m = margin_px
    return bool((rc[:, 0] < -m).all() or (rc[:, 0] > smap.height + m).all()
                or (rc[:, 1] < -m).all() or (rc[:, 1] > smap.width + m).all())


def _stamp_road(smap: SemanticMap, decimated: np.ndarray, width: float) -> None:
    radius_px = (width / 2.0) / smap.resolution
    if _outside_canvas(smap, decimated, radius_px):
        log.warning("road path entirely outside canvas; skipping")
        return
    ax, ay, bx, by = _path_segments_px(smap, decimated)
    kernels.fill_capsules(smap.classes, ax, ay, bx, by, radius_px, np.uint8(ROAD))


def rasterize_road(smap: SemanticMap, path: Trajectory, width: float) -> SemanticMap:
    """Stamp a road stroke of the given width along a path (in place).

    Every pixel whose center lies within width/2 of the polyline becomes
    road; road overrides anything already present.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if len(path) < 2:
        raise ValueError("path needs at least 2 points")
    _stamp_road(smap, _decimate_polyline(path.points), width)
    return smap


def add_sidewalks(smap: SemanticMap, path: Trajectory, road_width: float,
                  sidewalk_width: float, jitter: bool, seed) -> SemanticMap:
    """Add sidewalk bands on both sides of a road path (in place).

    The band covers distances (road_width/2, road_width/2 + w] from the
    polyline; with jitter enabled w varies smoothly in
    [0.3 * sidewalk_width, sidewalk_width] over arc length. Sidewalk never
    overwrites road pixels.
    """
    if road_width <= 0 or sidewalk_width <= 0:
        raise ValueError("widths must be positive")
    if len(path) < 2:
        raise ValueError("path needs at least 2 points")
    _stamp_sidewalks(smap, _decimate_polyline(path.points), road_width,
                     sidewalk_width, jitter, seed)
    return smap


def _stamp_sidewalks(smap: SemanticMap, decimated: np.ndarray, road_width: float,
                     sidewalk_width: float, jitter: bool, seed) -> None:
    res = smap.resolution
    inner_px = (road_width / 2.0) / res
    max_w_px = sidewalk_width / res
    if _outside_canvas(smap, decimated, inner_px + max_w_px):
        return
    ax, ay, bx, by = _path_segments_px(smap, decimated)
    seg_len = np.hypot(bx - ax, by - ay)
    arc0 = np.concatenate([[0.0], np.cumsum(seg_len)[:-1]])
    total = arc0[-1] + seg_len[-1] if len(seg_len) else 0.0

    if jitter:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        spacing_px = 8.0 / res  # jitter control point every 8 m of arc
        n_nodes = max(int(math.ceil(total / spacing_px)) + 1, 2)
        arc_grid = np.linspace(0.0, max(total, 1.0), n_nodes)
        width_grid = rng.uniform(0.3 * max_w_px, max_w_px, size=n_nodes)
    else:
        arc_grid = np.array([0.0, max(total, 1.0)])
        width_grid = np.array([max_w_px, max_w_px])

    kernels.fill_band(smap.classes, ax, ay, bx, by, arc0, inner_px,
                      arc_grid, width_grid, np.uint8(SIDEWALK), np.uint8(ROAD))


_NOISE_RAMPS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _noise_ramp(h: int, w: int):
    """Cached radial ramp clamp((r - 0.6 R)/(0.4 R), 0, 1) and the flat
    indices where it is positive (R = half-diagonal)."""
    key = (h, w)
    if key not in _NOISE_RAMPS:
        cy, cx = h / 2.0, w / 2.0
        yy = np.arange(h, dtype=np.float64)[:, None] + 0.5 - cy
        xx = np.arange(w, dtype=np.float64)[None, :] + 0.5 - cx
        r = np.sqrt(xx * xx + yy * yy)
        big_r = math.hypot(cx, cy)
        ramp = np.clip((r - 0.6 * big_r) / (0.4 * big_r), 0.0, 1.0)
        _NOISE_RAMPS[key] = (ramp.ravel(), np.flatnonzero(ramp.ravel() > 0.0))
    return _NOISE_RAMPS[key]


def apply_lidar_noise(smap: SemanticMap, seed, intensity: float = 0.5) -> SemanticMap:
    """Flip non-background pixels to background near map borders (in place).

    Mimics LiDAR sparsity at range: each non-background pixel flips
    independently with probability intensity * clamp((r - 0.6 R)/(0.4 R),
    0, 1), where r is the distance from the map center and R the
    half-diagonal; the central 60% radius is never touched.
    """
    if not 0.0 <= intensity <= 1.0:
        raise ValueError("intensity must be in [0, 1]")
    if intensity == 0.0:
        return smap
    h, w = smap.classes.shape
    ramp, active = _noise_ramp(h, w)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(len(active))
    flat = smap.classes.ravel()
    hit = active[(u < intensity * ramp[active]) & (flat[active] != BACKGROUND)]
    flat[hit] = BACKGROUND
    return smap


@dataclass
class Scene:
    """A rasterized scene plus the trajectories that carved it."""

    map: SemanticMap
    backbone: Trajectory
    branches: list[tuple[int, Trajectory]]
    unreachable: list[Trajectory]
    path_widths: dict[str, list[float]]
    config: MapGenConfig


def _sample_path(chain: MarkovChain, rng: np.random.Generator, start: Pose,
                 min_arc_m: float, max_steps: int) -> Trajectory:
    """Chain-sample a trajectory from ``start`` until it spans ``min_arc_m``
    of arc length (or the step cap)."""
    chunks = []
    state = None
    arc = 0.0
    steps = 0
    while arc < min_arc_m and steps < max_steps:
        n = min(200, max_steps - steps)
        offs, _, state, _ = sample_offsets(chain, n, rng, initial_state=state)
        chunks.append(offs)
        arc += float(offs[:, 0].sum())
        steps += n
    offsets = np.vstack(chunks)
    return from_offsets(start, offsets)


def _grow_until_exit(chain: MarkovChain, rng: np.random.Generator, start: Pose,
                     half_extent: float, max_steps: int) -> Trajectory:
    """Chain-sample a path until it leaves the canvas square (or step cap)."""
    points = [np.array([start.x, start.y])]
    pose = start
    state = None
    steps = 0
    while steps < max_steps:
        n = min(100, max_steps - steps)
        offs, _, state, _ = sample_offsets(chain, n, rng, initial_state=state)
        traj = from_offsets(pose, offs)
        points.append(traj.points[1:])
        heading = pose.heading + float(np.sum(offs[:, 1]))
        pose = Pose(traj.points[-1, 0], traj.points[-1, 1], heading)
        steps += n
        if abs(pose.x) > half_extent or abs(pose.y) > half_extent:
            break
    pts = np.vstack([points[0][None, :]] + points[1:])
    return Trajectory(pts)


def build_scene(chain: MarkovChain, cfg: MapGenConfig, seed: int) -> Scene:
    """Construct a full scene around a chain-sampled backbone.

    The backbone is anchored with its midpoint at the canvas center. Branch
    roads fork from random backbone anchors with a heading perturbed by a
    random turn in +-[pi/6, pi/2]; each path's width doubles with
    probability ``double_width_prob``; optional disconnected roads are
    placed where they cannot touch the main network. Roads are stamped
    before any sidewalk so class precedence holds scene-wide.
    """
    smap = blank_canvas(cfg)
    half_extent = cfg.canvas * cfg.resolution / 2.0

    backbone_rng = substream(seed, "backbone")
    branch_rng = substream(seed, "branch")
    width_rng = substream(seed, "width")
    unreach_rng = substream(seed, "unreachable")
    jitter_rng = substream(seed, "jitter")

    heading0 = float(backbone_rng.uniform(-math.pi, math.pi))
    backbone = _sample_path(chain, backbone_rng, Pose(0.0, 0.0, heading0),
                            min_arc_m=2.9 * half_extent, max_steps=1600)
    mid = len(backbone) // 2
    backbone = Trajectory(backbone.points - backbone.points[mid], backbone.rate_hz)

    paths: list[Trajectory] = [backbone]
    widths: list[float] = []

    n_branches = int(branch_rng.integers(1, cfg.branching_factor_max + 1))
    branches: list[tuple[int, Trajectory]] = []
    headings = point_headings(backbone)
    for _ in range(n_branches):
        branch = None
        anchor_idx = 0
        for _attempt in range(10):
            anchor_idx = int(branch_rng.integers(0, len(backbone)))
            turn = float(branch_rng.uniform(math.pi / 6.0, math.pi / 2.0))
            if branch_rng.random() < 0.5:
                turn = -turn
            start = Pose(backbone.points[anchor_idx, 0],
                         backbone.points[anchor_idx, 1],
                         float(headings[anchor_idx]) + turn)
            candidate = _grow_until_exit(chain, branch_rng, start,
                                         half_extent, max_steps=360)
            head = candidate.points[: min(20, len(candidate))]
            if (np.abs(head) <= half_extent).all():
                branch = candidate
                break
        if branch is None:
            branch = candidate
            log.warning("branch kept despite exiting canvas immediately")
        branches.append((anchor_idx, branch))
        paths.append(branch)

    for _ in paths:
        double = width_rng.random() < cfg.double_width_prob
        widths.append(cfg.lane_width * (2.0 if double else 1.0))

    # Decimate each path once; the raster passes below reuse the result.
    decimated = [_decimate_polyline(p.points) for p in paths]

    # Road pass for the connected network.
    for dec, width in zip(decimated, widths):
        _stamp_road(smap, dec, width)

    # Disconnected roads: validated against the network mask so flood fill
    # from the backbone can never reach them.
    unreachable: list[Trajectory] = []
    unreach_widths: list[float] = []
    if cfg.unreachable_roads:
        n_unreach = int(unreach_rng.integers(1, 4))
        for _ in range(n_unreach):
            width = cfg.lane_width * (2.0 if unreach_rng.random() < cfg.double_width_prob else 1.0)
            for _attempt in range(10):
                pos = unreach_rng.uniform(-0.8 * half_extent, 0.8 * half_extent, size=2)
                heading = float(unreach_rng.uniform(-math.pi, math.pi))
                steps = 200 if _attempt < 5 else 100
                offs, _, _, _ = sample_offsets(chain, steps, unreach_rng)
                candidate = from_offsets(Pose(pos[0], pos[1], heading), offs)
                if int(smap.contains(candidate.points).sum()) < 40:
                    continue
                # Reject if any existing pixel sits within the stroke radius
                # plus a 2 px gap: guarantees no 8-connected road adjacency.
                dec = _decimate_polyline(candidate.points)
                ax, ay, bx, by = _path_segments_px(smap, dec)
                clearance = (width / 2.0) / cfg.resolution + 2.0
                if kernels.capsule_hits(smap.classes, ax, ay, bx, by, clearance):
                    continue
                _stamp_road(smap, dec, width)
                unreachable.append(candidate)
                unreach_widths.append(width)
                decimated.append(dec)
                break
            else:
                log.warning("could not place a disconnected road; skipping one")

    # Sidewalk pass, after every road is down.
    for dec, width in zip(decimated, widths + unreach_widths):
        _stamp_sidewalks(smap, dec, width, cfg.sidewalk_width,
                         cfg.sidewalk_jitter, jitter_rng)

    return Scene(
        map=smap,
        backbone=backbone,
        branches=branches,
        unreachable=unreachable,
        path_widths={"backbone": widths[:1], "branches": widths[1:],
                     "unreachable": unreach_widths},
        config=cfg,
    )


def crop_context(scene_map: SemanticMap, present: Pose, crop_size: int) -> SemanticMap:
    """Heading-up crop of ``crop_size``^2 pixels centered on the present.

    The scene is rotated about the present so its heading points up, then
    sampled nearest-neighbor with the present at the exact center of pixel
    (crop_size/2, crop_size/2). Out-of-source pixels become background and
    are counted in ``background_fill``.
    """
    if crop_size % 2 != 0:
        raise ValueError("crop_size must be even")
    x0, y_top = scene_map.origin
    out, oob = kernels.resample_rotated(scene_map.classes, x0, y_top,
                                        scene_map.resolution, present.x,
                                        present.y, present.heading, crop_size)
    if oob:
        log.debug("crop sampled %d out-of-canvas pixels", oob)
    half = crop_size // 2
    res = scene_map.resolution
    origin = (-(half + 0.5) * res, (half + 0.5) * res)
    return SemanticMap(out, res, origin, background_fill=int(oob))
