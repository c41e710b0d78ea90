"""False-color rendering of samples: maps with trajectory overlays.

Palette: road purple, sidewalk pink, background black; past trajectory
red, ground-truth futures green, predictions blue.
"""

from __future__ import annotations

import numpy as np

from trajgen.samples import MultimodalSample

COLOR_PAST = (255, 0, 0)
COLOR_FUTURE = (0, 255, 0)
COLOR_PREDICTION = (0, 0, 255)


def draw_polyline(image: np.ndarray, pixels_rc: np.ndarray, color) -> None:
    """Stamp a 1-px polyline given continuous (row, col) coordinates."""
    pts = np.asarray(pixels_rc, dtype=np.float64)
    h, w = image.shape[:2]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(np.hypot(*(b - a)) * 4)), 2)
        t = np.linspace(0.0, 1.0, n)[:, None]
        rc = np.floor(a + t * (b - a)).astype(np.int64)
        keep = (rc[:, 0] >= 0) & (rc[:, 0] < h) & (rc[:, 1] >= 0) & (rc[:, 1] < w)
        rc = rc[keep]
        image[rc[:, 0], rc[:, 1]] = color


def render_sample(sample: MultimodalSample,
                  predictions: list[np.ndarray] | None = None) -> np.ndarray:
    """(H, W, 3) uint8 image of the sample map with trajectory overlays."""
    image = sample.map.to_color().copy()
    for fut_px in sample.future_pixels():
        draw_polyline(image, fut_px, COLOR_FUTURE)
    if predictions:
        for pred in predictions:
            draw_polyline(image, sample.map.world_to_pixel_f(pred), COLOR_PREDICTION)
    draw_polyline(image, sample.past_pixels(), COLOR_PAST)
    return image
