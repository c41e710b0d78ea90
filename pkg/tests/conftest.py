"""Shared fixtures: synthetic driving logs and chains at several scales."""

import numpy as np
import pytest

from trajgen.chain import ClusterModel, MarkovChain, estimate
from trajgen.geometry import Pose, Trajectory, from_offsets


def momentum_walk_trajectories(seed=0, n_traj=60, steps=220):
    """Synthetic driving logs: ~1.2 m/step cruising broken up by proper turn
    episodes (35-140 degrees over 1-2 s), the texture an urban drive with
    regular intersections would produce at 10 Hz."""
    rng = np.random.default_rng(seed)
    trajs = []
    for _ in range(n_traj):
        rho = np.clip(rng.normal(1.2, 0.15, steps), 0.3, 2.2)
        theta = np.zeros(steps)
        k = 0
        while k < steps:
            if rng.random() < 0.22:
                dur = int(rng.integers(10, 19))
                sign = 1.0 if rng.random() < 0.5 else -1.0
                theta[k:k + dur] += sign * rng.uniform(0.05, 0.12)
                k += dur
            else:
                k += int(rng.integers(4, 12))
        theta += rng.normal(0.0, 0.004, steps)
        offsets = np.column_stack([rho, np.clip(theta, -0.5, 0.5)])
        start = Pose(0.0, 0.0, rng.uniform(-np.pi, np.pi))
        trajs.append(from_offsets(start, offsets))
    return trajs


def random_trajectory(rng, n_points=None):
    n = int(n_points or rng.integers(3, 60))
    offsets = np.column_stack([
        rng.uniform(0.0, 3.0, n - 1),
        rng.uniform(-np.pi * 0.9, np.pi * 0.9, n - 1),
    ])
    start = Pose(rng.normal(0, 50), rng.normal(0, 50), rng.uniform(-np.pi, np.pi))
    return from_offsets(start, offsets)


def make_chain(centroids, transitions, initial, order=1, members=None):
    """Hand-build a chain: ``transitions`` maps state index -> (dests, probs);
    states are single-id grams running 0..len(initial)-1 for order 1."""
    centroids = np.asarray(centroids, dtype=np.float64)
    n_states = len(initial)
    if order == 1:
        grams = np.arange(n_states, dtype=np.uint32)[:, None]
    else:
        raise ValueError("hand-built chains here are order 1")
    if members is None:
        members = [centroids[k:k + 1].copy() for k in range(len(centroids))]
    rows = {}
    for src, (dests, probs) in transitions.items():
        probs = np.asarray(probs, dtype=np.float64)
        rows[src] = (np.asarray(dests, dtype=np.int64), probs, np.cumsum(probs))
    model = ClusterModel(centroids=centroids, members=members)
    return MarkovChain(clusters=model, order=order, grams=grams,
                       initial_probs=np.asarray(initial, dtype=np.float64),
                       transitions=rows)


@pytest.fixture(scope="session")
def demo_trajectories():
    return momentum_walk_trajectories()


@pytest.fixture(scope="session")
def demo_chain(demo_trajectories):
    return estimate(demo_trajectories, c=40, n=2, seed=0)


@pytest.fixture(scope="session")
def straight_chain():
    """One state emitting exactly (rho=1, theta=0): straight 1 m steps."""
    return make_chain(
        centroids=[[1.0, 0.0]],
        transitions={0: ([0], [1.0])},
        initial=[1.0],
    )


@pytest.fixture(scope="session")
def two_state_chain():
    """Two-state chain with a known transition matrix for frequency checks."""
    return make_chain(
        centroids=[[1.0, 0.0], [1.0, 0.1]],
        transitions={0: ([0, 1], [0.7, 0.3]), 1: ([0, 1], [0.4, 0.6])},
        initial=[0.5, 0.5],
    )
