"""Assembly of multimodal training samples.

A sample couples one observed past (2 s) with 1-5 equally valid futures
(4 s each) and a heading-up semantic map crop centered on the present.
Alternative futures re-sample the motion chain from points along the
backbone future, and their roads are carved into the scene so every
future stays on road.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from trajgen.chain import MarkovChain, sample_offsets
from trajgen.geometry import (
    Pose,
    Trajectory,
    from_offsets,
    point_headings,
    to_frame,
    to_offsets,
)
from trajgen.mapgen import (
    MapGenConfig,
    Scene,
    SemanticMap,
    add_sidewalks,
    apply_lidar_noise,
    build_scene,
    crop_context,
    rasterize_road,
)
from trajgen.seeds import derive_seed, substream

log = logging.getLogger(__name__)

# Alternate futures branch at indices [BRANCH_LO, F - BRANCH_MARGIN] of the
# future segment: late enough to share a prefix, early enough to diverge.
BRANCH_LO = 5
BRANCH_MARGIN = 10


@dataclass(frozen=True)
class SampleConfig:
    """Sample-assembly knobs; defaults match the 10 Hz / 2 s / 4 s protocol."""

    n_gt_range: tuple[int, int] = (1, 5)
    shift_enabled: bool = True
    shift_right_bias: float = 0.7
    crop_size: int = 360
    past_points: int = 20
    future_points: int = 40
    rate_hz: float = 10.0
    horizon_seconds: float = 6.0
    max_extent_frac: float = 0.45

    def __post_init__(self):
        lo, hi = self.n_gt_range
        if not 1 <= lo <= hi <= 5:
            raise ValueError("n_gt_range must satisfy 1 <= lo <= hi <= 5")
        if self.crop_size % 2 != 0:
            raise ValueError("crop_size must be even")
        if not 0.0 <= self.shift_right_bias <= 1.0:
            raise ValueError("shift_right_bias must be in [0, 1]")
        horizon = (self.past_points + self.future_points) / self.rate_hz
        if abs(horizon - self.horizon_seconds) > 1e-9:
            raise ValueError("past+future points must span horizon_seconds")


@dataclass(frozen=True)
class SampleMeta:
    """Generation provenance: seed, scene, and per-future branch origin
    (0 = backbone continuation, otherwise the future index branched at)."""

    seed: int
    scene_id: int
    n_gt: int
    branch_indices: tuple[int, ...]
    flags: tuple[str, ...] = ()


@dataclass
class MultimodalSample:
    """One past, 1-5 futures, and a heading-up context map.

    Trajectories are in meters in the heading-up frame (present at the
    origin, heading +y); pixel coordinates are derived through the map.
    """

    past: np.ndarray
    futures: list[np.ndarray]
    map: SemanticMap
    meta: SampleMeta

    def __post_init__(self):
        self.past = np.ascontiguousarray(self.past, dtype=np.float64)
        self.futures = [np.ascontiguousarray(f, dtype=np.float64) for f in self.futures]
        if self.past.ndim != 2 or self.past.shape[1] != 2:
            raise ValueError("past must be (P, 2)")
        if not 1 <= len(self.futures) <= 5:
            raise ValueError("need 1-5 futures")
        f_len = len(self.futures[0])
        for fut in self.futures:
            if fut.shape != (f_len, 2):
                raise ValueError("all futures must share one length")
            if not np.allclose(fut[0], self.futures[0][0]):
                raise ValueError("futures must share the present-adjacent prefix")
        if len(self.meta.branch_indices) != len(self.futures):
            raise ValueError("branch provenance must cover every future")
        center = self.map.world_to_pixel(self.past[-1:])
        expected = self.map.width // 2
        if center[0, 0] != expected or center[0, 1] != expected:
            raise ValueError("present must map to the center pixel")

    @property
    def n_futures(self) -> int:
        return len(self.futures)

    def past_pixels(self) -> np.ndarray:
        return self.map.world_to_pixel_f(self.past)

    def future_pixels(self) -> list[np.ndarray]:
        return [self.map.world_to_pixel_f(f) for f in self.futures]


def draw_shift_offset(lane_width: float, right_bias: float,
                      rng: np.random.Generator) -> float:
    """Draw the signed lateral lane offset for one sample.

    With probability ``right_bias`` the offset follows a triangular
    distribution over [-0.25 w, +0.4 w] with mode +0.25 w (positive =
    driver's right); otherwise its mirror image. The bound keeps the
    shifted path inside a lane of width w.
    """
    w = lane_width
    if rng.random() < right_bias:
        return float(rng.triangular(-0.25 * w, 0.25 * w, 0.4 * w))
    return float(rng.triangular(-0.4 * w, -0.25 * w, 0.25 * w))


def shift_points(points: np.ndarray, offset: float) -> np.ndarray:
    """Displace every point by ``offset`` along its local right-hand normal."""
    pts = np.asarray(points, dtype=np.float64)
    if offset == 0.0:
        return pts.copy()
    headings = point_headings(Trajectory(pts))
    normals = np.column_stack([np.sin(headings), -np.cos(headings)])
    return pts + offset * normals


def lateral_shift(traj: Trajectory, lane_width: float, right_bias: float,
                  seed) -> Trajectory:
    """Shift a whole trajectory sideways within its lane (random, seeded)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = draw_shift_offset(lane_width, right_bias, rng)
    return Trajectory(shift_points(traj.points, d), traj.rate_hz)


def branch_futures(chain: MarkovChain, scene: Scene, segment: Trajectory,
                   n_gt: int, seed, cfg: SampleConfig = SampleConfig()):
    """Build 1-5 ground-truth futures for a past+future segment.

    Future #1 continues the backbone; the others re-sample the chain from
    distinct indices of the future segment (the chain state is seeded with
    the preceding N offsets) and get their own roads carved into the scene.
    Returns (futures, branch provenance, warning flags).
    """
    p, f = cfg.past_points, cfg.future_points
    if len(segment) < p + f:
        raise ValueError(f"segment needs >= {p + f} points")
    if n_gt < 1:
        raise ValueError("n_gt must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    pts = segment.points[:p + f]
    present = pts[p - 1]
    max_radius = cfg.max_extent_frac * cfg.crop_size * scene.map.resolution
    fut = pts[p:]
    futures = [fut.copy()]
    branch_indices = [0]
    flags: list[str] = []

    candidates = np.arange(BRANCH_LO, f - BRANCH_MARGIN + 1)
    want = n_gt - 1
    if want > len(candidates):
        flags.append("fewer_futures")
        want = len(candidates)
    picks = rng.choice(candidates, size=want, replace=False) if want else []

    new_roads: list[np.ndarray] = []
    for j in (int(v) for v in picks):
        combined = pts[:p + j]
        comb_offs = to_offsets(Trajectory(combined))
        heading = float(point_headings(Trajectory(combined))[-1])
        pose = Pose(combined[-1, 0], combined[-1, 1], heading)
        state = None
        if len(comb_offs) >= chain.order:
            state = chain.state_for_ids(chain.clusters.assign(comb_offs[-chain.order:]))
        tail = None
        for _attempt in range(6):
            offs, _, _, _ = sample_offsets(chain, f - j, rng, initial_state=state)
            cand = from_offsets(pose, offs).points[1:]
            if (np.hypot(*(cand - present).T) <= max_radius).all():
                tail = cand
                break
        if tail is None:
            flags.append("dropped_far_future")
            continue
        futures.append(np.vstack([fut[:j], tail]))
        branch_indices.append(j)
        new_roads.append(np.vstack([combined[-1:], tail]))

    lane_w = scene.config.lane_width
    for road in new_roads:
        rasterize_road(scene.map, Trajectory(road), lane_w)
    for road in new_roads:
        add_sidewalks(scene.map, Trajectory(road), lane_w,
                      scene.config.sidewalk_width, scene.config.sidewalk_jitter,
                      rng)
    if len(futures) < n_gt and "fewer_futures" not in flags:
        flags.append("fewer_futures")
    return futures, branch_indices, flags


def _pick_segment(scene: Scene, cfg: SampleConfig, rng: np.random.Generator):
    """Choose a segment start so the rotated crop and the whole 6 s window
    stay safely inside the working canvas. Returns the start index or None."""
    p, f = cfg.past_points, cfg.future_points
    window = p + f
    bb = scene.backbone.points
    if len(bb) < window:
        return None
    crop_extent = cfg.crop_size * scene.map.resolution
    canvas_half = scene.map.width * scene.map.resolution / 2.0
    safe = canvas_half - crop_extent * math.sqrt(2.0) / 2.0 - 2.0 * scene.map.resolution
    if safe <= 0:
        raise ValueError("canvas too small for the requested crop")
    max_radius = cfg.max_extent_frac * crop_extent

    present = bb[p - 1:p - 1 + len(bb) - window + 1]
    in_safe = np.flatnonzero((np.abs(present) <= safe).all(axis=1))
    if len(in_safe) == 0:
        return None
    windows = np.lib.stride_tricks.sliding_window_view(bb, (window, 2))[:, 0]
    rel = windows[in_safe] - present[in_safe, None, :]
    radius_ok = ((rel ** 2).sum(axis=2).max(axis=1)) <= max_radius ** 2
    cands = in_safe[radius_ok]
    if len(cands) == 0:
        return None
    return int(cands[int(rng.integers(len(cands)))])


def generate_sample(chain: MarkovChain, map_cfg: MapGenConfig,
                    sample_cfg: SampleConfig, seed: int) -> MultimodalSample:
    """Run the full generation pipeline for one seed.

    Scene construction, segment selection, lateral lane shift, future
    branching, border noise, and the heading-up crop all draw from named
    sub-streams of ``seed``, so the result is a pure function of
    (configs, seed) and ablation toggles never perturb each other.
    """
    p = sample_cfg.past_points
    scene = None
    start = None
    for attempt in range(8):
        scene_seed = derive_seed(seed, "scene", attempt)
        scene = build_scene(chain, map_cfg, scene_seed)
        start = _pick_segment(scene, sample_cfg, substream(seed, "segment", attempt))
        if start is not None:
            break
    if start is None:
        raise RuntimeError("no usable segment found after 8 scene attempts; "
                           "the chain may produce too little motion")

    window = sample_cfg.past_points + sample_cfg.future_points
    segment = Trajectory(scene.backbone.points[start:start + window].copy())

    lo, hi = sample_cfg.n_gt_range
    n_gt = int(substream(seed, "ngt").integers(lo, hi + 1))
    futures, branch_indices, flags = branch_futures(
        chain, scene, segment, n_gt, substream(seed, "branch", attempt), sample_cfg)

    if sample_cfg.shift_enabled:
        d = draw_shift_offset(map_cfg.lane_width, sample_cfg.shift_right_bias,
                              substream(seed, "shift"))
    else:
        d = 0.0
    past = segment.points[:p]
    shifted_past = None
    shifted_futures = []
    for fut in futures:
        combined = shift_points(np.vstack([past, fut]), d)
        if shifted_past is None:
            shifted_past = combined[:p]
        shifted_futures.append(combined[p:])

    heading = float(point_headings(Trajectory(shifted_past))[-1])
    present_pose = Pose(shifted_past[-1, 0], shifted_past[-1, 1], heading)

    crop = crop_context(scene.map, present_pose, sample_cfg.crop_size)
    if crop.background_fill:
        flags = list(flags) + ["crop_background_fill"]
    if map_cfg.lidar_noise:
        apply_lidar_noise(crop, substream(seed, "noise"), map_cfg.lidar_intensity)

    meta = SampleMeta(
        seed=int(seed),
        scene_id=int(derive_seed(seed, "scene", attempt)),
        n_gt=len(futures),
        branch_indices=tuple(int(b) for b in branch_indices),
        flags=tuple(flags),
    )
    return MultimodalSample(
        past=to_frame(shifted_past, present_pose),
        futures=[to_frame(f, present_pose) for f in shifted_futures],
        map=crop,
        meta=meta,
    )
