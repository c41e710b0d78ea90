"""Classical single-mode predictors: constant velocity, linear least
squares, and a constant-velocity Kalman filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PREDICTOR_KINDS = ("constant_velocity", "linear", "kalman")


@dataclass(frozen=True)
class Predictor:
    """A baseline predictor spec; Kalman noise levels are tunable."""

    kind: str = "linear"
    sigma_a: float = 1.0   # process noise (white acceleration), m/s^2
    sigma_z: float = 0.1   # measurement noise, m

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.sigma_a <= 0 or self.sigma_z <= 0:
            raise ValueError("noise sigmas must be positive")


def _check_past(past: np.ndarray) -> np.ndarray:
    arr = np.asarray(past, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise ValueError("past must be (>=2, 2)")
    return arr


def predict_constant_velocity(past, horizon: int) -> np.ndarray:
    """Continue the last observed step vector for ``horizon`` steps."""
    p = _check_past(past)
    v = p[-1] - p[-2]
    steps = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    return p[-1] + steps * v


def predict_linear(past, horizon: int) -> np.ndarray:
    """Ordinary least-squares fit of x(t), y(t) over the past, extrapolated."""
    p = _check_past(past)
    t = np.arange(len(p), dtype=np.float64)
    design = np.column_stack([np.ones_like(t), t])
    coef, _, _, _ = np.linalg.lstsq(design, p, rcond=None)
    t_future = np.arange(len(p), len(p) + horizon, dtype=np.float64)
    return np.column_stack([np.ones_like(t_future), t_future]) @ coef


def predict_kalman(past, horizon: int, sigma_a: float = 1.0,
                   sigma_z: float = 0.1, dt: float = 0.1) -> np.ndarray:
    """Constant-velocity Kalman filter over the past, then ``horizon``
    prediction steps without measurement updates.

    State is [x, y, vx, vy]; process noise follows the white-acceleration
    model. All covariances are isotropic, so the predictor is rotation
    equivariant.
    """
    p = _check_past(past)
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    q_pos = dt ** 4 / 4.0
    q_cross = dt ** 3 / 2.0
    q_vel = dt ** 2
    q = sigma_a ** 2 * np.array([
        [q_pos, 0.0, q_cross, 0.0],
        [0.0, q_pos, 0.0, q_cross],
        [q_cross, 0.0, q_vel, 0.0],
        [0.0, q_cross, 0.0, q_vel],
    ])
    h = np.zeros((2, 4))
    h[0, 0] = h[1, 1] = 1.0
    r = sigma_z ** 2 * np.eye(2)

    v0 = (p[1] - p[0]) / dt
    x = np.array([p[0, 0], p[0, 1], v0[0], v0[1]])
    vel_var = 2.0 * (sigma_z / dt) ** 2  # variance of a differenced velocity
    cov = np.diag([sigma_z ** 2, sigma_z ** 2, vel_var, vel_var])
    for z in p[1:]:
        x = f @ x
        cov = f @ cov @ f.T + q
        innov_cov = h @ cov @ h.T + r
        gain = np.linalg.solve(innov_cov, h @ cov).T
        x = x + gain @ (z - h @ x)
        cov = (np.eye(4) - gain @ h) @ cov

    out = np.empty((horizon, 2))
    for k in range(horizon):
        x = f @ x
        out[k] = x[:2]
    return out


def predict(predictor: Predictor, past, horizon: int = 40) -> np.ndarray:
    """Run a baseline predictor; returns a single (horizon, 2) trajectory."""
    if predictor.kind == "constant_velocity":
        return predict_constant_velocity(past, horizon)
    if predictor.kind == "linear":
        return predict_linear(past, horizon)
    return predict_kalman(past, horizon, predictor.sigma_a, predictor.sigma_z)
