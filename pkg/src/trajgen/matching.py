"""Greedy prediction/ground-truth matching, multimodality loss, and the
classic variety/MSE losses, as pure functions over trajectory sets.

The multimodality loss pairs each ground-truth future with a prediction by
iteratively removing the globally closest pair, attaches surplus
predictions to their nearest future, then averages the squared pointwise
error over all pairs. Serves as the reference implementation whose values
are exported as test vectors for training code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DISTANCE_KINDS = ("mean_l2", "sum_l2", "final_l2")

MATCH_VECTORS_FORMAT = "trajgen-match-vectors"
MATCH_VECTORS_VERSION = 1


@dataclass(frozen=True)
class Assignment:
    """Pairing of predictions to ground truths.

    ``pairs`` covers min(K, N_GT) ground truths exactly once;
    ``leftover_pairs`` attaches each surplus prediction to its nearest
    ground truth. Every prediction appears exactly once overall.
    """

    pairs: tuple[tuple[int, int], ...]
    leftover_pairs: tuple[tuple[int, int], ...]

    @property
    def all_pairs(self) -> tuple[tuple[int, int], ...]:
        return self.pairs + self.leftover_pairs


def _as_stack(trajs) -> np.ndarray:
    arr = np.asarray(trajs, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"expected (K, T, 2) trajectories, got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("need at least one trajectory with at least one point")
    return arr


def traj_distance_matrix(preds, gts, kind: str = "mean_l2") -> np.ndarray:
    """(K, N) pairwise trajectory distances for equal-length trajectories."""
    if kind not in DISTANCE_KINDS:
        raise ValueError(f"unknown distance kind {kind!r}")
    p = _as_stack(preds)
    g = _as_stack(gts)
    if p.shape[1] != g.shape[1]:
        raise ValueError(f"trajectory lengths differ: {p.shape[1]} vs {g.shape[1]}")
    diff = p[:, None, :, :] - g[None, :, :, :]
    step = np.sqrt((diff ** 2).sum(axis=3))
    if kind == "mean_l2":
        return step.mean(axis=2)
    if kind == "sum_l2":
        return step.sum(axis=2)
    return step[:, :, -1]


def greedy_assign_matrix(dist: np.ndarray) -> Assignment:
    """Greedy assignment over an explicit (K, N) distance matrix.

    Repeatedly picks the smallest remaining (prediction, gt) distance and
    removes both, until every ground truth (or every prediction, if there
    are fewer) is matched; remaining predictions are then paired to their
    closest ground truth. Ties break on the lowest (pred, gt) index pair.
    """
    dist = np.asarray(dist, dtype=np.float64)
    k, n = dist.shape
    free_preds = list(range(k))
    free_gts = list(range(n))
    pairs = []
    while free_preds and free_gts:
        best = None
        for i in free_preds:
            for j in free_gts:
                key = (dist[i, j], i, j)
                if best is None or key < best:
                    best = key
        _, i, j = best
        pairs.append((i, j))
        free_preds.remove(i)
        free_gts.remove(j)
    leftovers = tuple((i, int(np.argmin(dist[i]))) for i in free_preds)
    return Assignment(pairs=tuple(pairs), leftover_pairs=leftovers)


def greedy_assign(preds, gts, kind: str = "mean_l2") -> Assignment:
    """Greedy minimum-distance assignment of predictions to ground truths
    (see :func:`greedy_assign_matrix` for the pairing rule)."""
    return greedy_assign_matrix(traj_distance_matrix(preds, gts, kind))


def mse(pred, gt) -> float:
    """Mean over timesteps of the squared L2 pointwise error."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"trajectory shapes differ: {p.shape} vs {g.shape}")
    return float(((p - g) ** 2).sum(axis=-1).mean())


def multimodality_loss(preds, gts, kind: str = "mean_l2") -> float:
    """Mean squared error over all greedy-matched (and leftover) pairs.

    Zero exactly when a perfect matching of equal trajectories covers all
    ground truths and all predictions. With the assignment held fixed the
    loss is differentiable in the predictions.
    """
    p = _as_stack(preds)
    g = _as_stack(gts)
    assignment = greedy_assign(p, g, kind)
    errors = [mse(p[i], g[j]) for i, j in assignment.all_pairs]
    return float(np.mean(errors))


def variety_loss(preds, gt) -> float:
    """Best-of-K: squared error of only the closest prediction to one gt."""
    p = _as_stack(preds)
    g = np.asarray(gt, dtype=np.float64)
    return min(mse(p[i], g) for i in range(len(p)))


def mse_loss(preds, gt) -> float:
    """Plain MSE of every prediction against one ground truth."""
    p = _as_stack(preds)
    g = np.asarray(gt, dtype=np.float64)
    return float(np.mean([mse(p[i], g) for i in range(len(p))]))


def generate_match_vectors(seed: int, cases: int = 64,
                           kind: str = "mean_l2") -> dict:
    """Random matching/loss test vectors for cross-implementation checks.

    Inputs and every derived quantity are emitted as exact 64-bit floats
    (JSON round-trips them losslessly).
    """
    rng = np.random.default_rng(seed)
    out_cases = []
    for idx in range(cases):
        k = int(rng.integers(1, 9))
        n = int(rng.integers(1, 6))
        t = int(rng.choice([10, 40]))
        scale = float(rng.uniform(0.5, 10.0))
        preds = rng.normal(0.0, scale, size=(k, t, 2))
        gts = rng.normal(0.0, scale, size=(n, t, 2))
        assignment = greedy_assign(preds, gts, kind)
        out_cases.append({
            "id": idx,
            "k": k,
            "n_gt": n,
            "t": t,
            "preds": preds.tolist(),
            "gts": gts.tolist(),
            "pairs": [list(p) for p in assignment.pairs],
            "leftover_pairs": [list(p) for p in assignment.leftover_pairs],
            "multimodality_loss": multimodality_loss(preds, gts, kind),
            "variety_loss": variety_loss(preds, gts[0]),
            "mse_loss": mse_loss(preds, gts[0]),
        })
    return {
        "format": MATCH_VECTORS_FORMAT,
        "version": MATCH_VECTORS_VERSION,
        "distance": kind,
        "seed": int(seed),
        "cases": out_cases,
    }


def write_match_vectors(path, seed: int, cases: int = 64,
                        kind: str = "mean_l2") -> dict:
    data = generate_match_vectors(seed, cases, kind)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    return data


def read_match_vectors(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format") != MATCH_VECTORS_FORMAT:
        raise ValueError("not a match-vectors file")
    if data.get("version") != MATCH_VECTORS_VERSION:
        raise ValueError(f"unsupported match-vectors version {data.get('version')}")
    return data
