"""Markov chain of quantized motion offsets estimated from real trajectories.

Offsets (rho, theta) are clustered with K-means; chain states are N-grams
of temporally adjacent cluster ids, so the chain keeps a short memory of
recent dynamics. Transition probabilities are occurrence counts normalized
per source state. Sampling walks the chain and emits, at each step, a
uniformly drawn member offset of the newest cluster in the new state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from trajgen.geometry import (
    NoiseFilter,
    Pose,
    Trajectory,
    filter_noise,
    from_offsets,
    to_offsets,
    validate_offsets,
)

log = logging.getLogger(__name__)

DEFAULT_CLUSTERS = 40
DEFAULT_ORDER = 2

_ASSIGN_CHUNK = 65536


@dataclass
class ClusterModel:
    """K-means model over (rho, theta) offsets.

    ``scale`` weights the two dimensions in the distance metric (default:
    raw meters/radians). ``members`` holds the training offsets per cluster,
    sorted, so emissions are reproducible regardless of input ordering.
    """

    centroids: np.ndarray
    members: list[np.ndarray]
    scale: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[1] != 2:
            raise ValueError("centroids must be (C, 2)")
        if len(self.centroids) < 1:
            raise ValueError("need at least one cluster")

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)

    def assign(self, offsets: np.ndarray) -> np.ndarray:
        """Nearest-centroid id for each offset (scaled Euclidean)."""
        offs = validate_offsets(offsets)
        s = np.asarray(self.scale, dtype=np.float64)
        scaled_centroids = self.centroids * s
        ids = np.empty(len(offs), dtype=np.int64)
        for lo in range(0, len(offs), _ASSIGN_CHUNK):
            chunk = offs[lo:lo + _ASSIGN_CHUNK] * s
            d2 = ((chunk[:, None, :] - scaled_centroids[None, :, :]) ** 2).sum(axis=2)
            ids[lo:lo + _ASSIGN_CHUNK] = np.argmin(d2, axis=1)
        return ids


def fit_clusters(offsets: np.ndarray, c: int, seed: int,
                 scale: tuple[float, float] = (1.0, 1.0),
                 max_iter: int = 200) -> ClusterModel:
    """Lloyd's K-means with k-means++ seeding over (rho, theta) offsets.

    Converges when no assignment changes (or after ``max_iter`` rounds);
    clusters that empty out are re-seeded to the farthest point. The data
    is canonically sorted internally, so the fit does not depend on input
    order.
    """
    offs = validate_offsets(offsets)
    if not 1 <= c <= len(offs):
        raise ValueError(f"need 1 <= c <= len(offsets); got c={c}, n={len(offs)}")
    distinct = len(np.unique(offs, axis=0))
    if c > distinct:
        raise ValueError(f"c={c} exceeds the {distinct} distinct offsets")

    s = np.asarray(scale, dtype=np.float64)
    order = np.lexsort((offs[:, 1], offs[:, 0]))
    x = offs[order] * s
    n = len(x)
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((c, 2), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    if c > 1:
        d2 = ((x - centers[0]) ** 2).sum(axis=1)
        for k in range(1, c):
            probs = d2 / d2.sum()
            centers[k] = x[int(rng.choice(n, p=probs))]
            d2 = np.minimum(d2, ((x - centers[k]) ** 2).sum(axis=1))

    ids = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_ids = np.argmin(d2, axis=1)

        counts = np.bincount(new_ids, minlength=c)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            own = d2[np.arange(n), new_ids]
            for k in empty:
                far = int(np.argmax(own))
                centers[k] = x[far]
                own[far] = 0.0
            d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_ids = np.argmin(d2, axis=1)
            counts = np.bincount(new_ids, minlength=c)

        if (new_ids == ids).all():
            break
        ids = new_ids
        sums_rho = np.bincount(ids, weights=x[:, 0], minlength=c)
        sums_theta = np.bincount(ids, weights=x[:, 1], minlength=c)
        centers = np.column_stack([sums_rho, sums_theta]) / counts[:, None]

    model = ClusterModel(centroids=centers / s, members=[], scale=(float(s[0]), float(s[1])))
    final_ids = model.assign(offs)
    members = []
    for k in range(c):
        mem = offs[final_ids == k]
        key = np.lexsort((mem[:, 1], mem[:, 0]))
        members.append(np.ascontiguousarray(mem[key]))
    if any(len(m) == 0 for m in members):
        raise RuntimeError("empty cluster survived fitting")
    model.members = members
    return model


@dataclass
class MarkovChain:
    """N-gram-state chain over cluster ids with row-stochastic transitions.

    ``grams`` lists each observed state's id sequence (oldest first), in a
    canonical order; ``transitions`` maps a state index to its outgoing
    (destinations, probabilities, cumulative probabilities). States that
    were only ever observed at the end of a trajectory have no row;
    sampling restarts from the initial distribution when it lands on one.
    """

    clusters: ClusterModel
    order: int
    grams: np.ndarray
    initial_probs: np.ndarray
    transitions: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]
    _state_index: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)
    _initial_cum: np.ndarray = field(default=None, repr=False)
    _csr: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.grams = np.ascontiguousarray(self.grams, dtype=np.uint32)
        self.initial_probs = np.ascontiguousarray(self.initial_probs, dtype=np.float64)
        if not self._state_index:
            self._state_index = {tuple(int(v) for v in g): i
                                 for i, g in enumerate(self.grams)}
        if self._initial_cum is None:
            self._initial_cum = np.cumsum(self.initial_probs)
        self.validate()
        self._csr = self._build_csr()

    def _build_csr(self):
        """Flat-array view of the chain used by the sampling kernel."""
        s = self.n_states
        row_ptr = np.zeros(s + 1, dtype=np.int64)
        for src in range(s):
            row = self.transitions.get(src)
            row_ptr[src + 1] = row_ptr[src] + (len(row[0]) if row else 0)
        dests = np.zeros(int(row_ptr[-1]), dtype=np.int64)
        cums = np.zeros(int(row_ptr[-1]), dtype=np.float64)
        for src, (d, _, c) in self.transitions.items():
            dests[row_ptr[src]:row_ptr[src + 1]] = d
            cums[row_ptr[src]:row_ptr[src + 1]] = c
        newest = np.ascontiguousarray(self.grams[:, -1], dtype=np.int64)
        n_clusters = self.clusters.n_clusters
        mem_ptr = np.zeros(n_clusters + 1, dtype=np.int64)
        members = self.clusters.members
        if members:
            for k in range(n_clusters):
                mem_ptr[k + 1] = mem_ptr[k] + len(members[k])
            mem_data = (np.vstack(members) if mem_ptr[-1]
                        else np.empty((0, 2), dtype=np.float64))
        else:
            mem_data = np.empty((0, 2), dtype=np.float64)
        mem_data = np.ascontiguousarray(mem_data, dtype=np.float64)
        centroids = np.ascontiguousarray(self.clusters.centroids, dtype=np.float64)
        uniform_cum = np.arange(1, s + 1, dtype=np.float64) / s
        return (row_ptr, dests, cums, newest, mem_ptr, mem_data, centroids,
                uniform_cum)

    @property
    def n_states(self) -> int:
        return len(self.grams)

    def state_for_ids(self, ids) -> int | None:
        """State index of an N-gram of cluster ids, or None if unobserved."""
        key = tuple(int(v) for v in ids)
        if len(key) != self.order:
            raise ValueError(f"need exactly {self.order} ids, got {len(key)}")
        return self._state_index.get(key)

    def validate(self):
        c = self.clusters.n_clusters
        if self.grams.ndim != 2 or self.grams.shape[1] != self.order:
            raise ValueError("grams must be (S, order)")
        if self.grams.size and int(self.grams.max()) >= c:
            raise ValueError("gram ids must reference existing clusters")
        if self.n_states > c ** self.order:
            raise ValueError("more states than C^N")
        if abs(float(self.initial_probs.sum()) - 1.0) > 1e-9:
            raise ValueError("initial distribution must sum to 1")
        if (self.initial_probs < 0).any():
            raise ValueError("probabilities must be non-negative")
        if not self.transitions:
            raise ValueError("chain has no transitions")
        for src, (dests, probs, _) in self.transitions.items():
            if len(dests) == 0:
                raise ValueError(f"state {src} has an empty transition row")
            if (probs < 0).any() or abs(float(probs.sum()) - 1.0) > 1e-9:
                raise ValueError(f"row {src} is not a probability distribution")


def _encode(windows: np.ndarray, c: int) -> np.ndarray:
    n = windows.shape[1]
    if c ** n >= 2 ** 62:
        raise ValueError("state space too large to encode")
    powers = c ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return windows.astype(np.int64) @ powers


def _decode(codes: np.ndarray, c: int, n: int) -> np.ndarray:
    out = np.empty((len(codes), n), dtype=np.uint32)
    rem = codes.astype(np.int64).copy()
    for j in range(n - 1, -1, -1):
        out[:, j] = rem % c
        rem //= c
    return out


def estimate(trajectories: list[Trajectory], c: int = DEFAULT_CLUSTERS,
             n: int = DEFAULT_ORDER, noise_filter: NoiseFilter | None = NoiseFilter(),
             seed: int = 0, scale: tuple[float, float] = (1.0, 1.0)) -> MarkovChain:
    """Estimate a chain from real trajectories.

    Pipeline: polar offsets per trajectory -> noise filter -> K-means ids ->
    sliding N-grams per trajectory (never across trajectory boundaries) ->
    transition counts normalized per source state. The initial distribution
    is the empirical frequency of state occurrences. Shuffling the input
    trajectories changes no probability.
    """
    if n < 1:
        raise ValueError("state order must be >= 1")
    per_traj: list[np.ndarray] = []
    skipped = 0
    for traj in trajectories:
        if len(traj) < 3:
            skipped += 1
            continue
        offs = to_offsets(traj)
        if noise_filter is not None:
            offs = filter_noise(offs, noise_filter.rho_min, noise_filter.theta_max)
        if len(offs):
            per_traj.append(offs)
    if skipped:
        log.info("skipped %d trajectories with < 3 points", skipped)
    if not per_traj:
        raise ValueError("no usable offsets after filtering")

    model = fit_clusters(np.vstack(per_traj), c, seed, scale)

    window_codes: list[np.ndarray] = []
    pair_codes: list[np.ndarray] = []
    for offs in per_traj:
        ids = model.assign(offs)
        if len(ids) < n:
            continue
        windows = np.lib.stride_tricks.sliding_window_view(ids, n)
        codes = _encode(windows, c)
        window_codes.append(codes)
        if len(codes) > 1:
            pair_codes.append(np.column_stack([codes[:-1], codes[1:]]))

    if not pair_codes:
        raise ValueError("no state transitions observed")

    occurrences = np.concatenate(window_codes)
    state_codes, occ_counts = np.unique(occurrences, return_counts=True)
    initial_probs = occ_counts / occ_counts.sum()

    pairs = np.vstack(pair_codes)
    uniq_pairs, pair_counts = np.unique(pairs, axis=0, return_counts=True)
    code_to_index = {int(code): i for i, code in enumerate(state_codes)}

    transitions: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    src_codes = uniq_pairs[:, 0]
    boundaries = np.flatnonzero(np.diff(src_codes)) + 1
    for group in np.split(np.arange(len(uniq_pairs)), boundaries):
        src = code_to_index[int(src_codes[group[0]])]
        dests = np.array([code_to_index[int(d)] for d in uniq_pairs[group, 1]],
                         dtype=np.int64)
        counts = pair_counts[group].astype(np.float64)
        probs = counts / counts.sum()
        transitions[src] = (dests, probs, np.cumsum(probs))

    return MarkovChain(
        clusters=model,
        order=n,
        grams=_decode(state_codes, c, n),
        initial_probs=initial_probs,
        transitions=transitions,
    )


def _draw_initial(chain: MarkovChain, rng: np.random.Generator,
                  uniform: bool) -> int:
    if uniform:
        return int(rng.integers(chain.n_states))
    u = rng.random()
    idx = int(np.searchsorted(chain._initial_cum, u, side="right"))
    return min(idx, chain.n_states - 1)


def sample_offsets(chain: MarkovChain, steps: int, rng: np.random.Generator,
                   initial_state: int | None = None,
                   uniform_start: bool = False):
    """Walk the chain for ``steps`` transitions, emitting one offset each.

    Returns (offsets (steps, 2), emitted cluster ids, final state index,
    restart count). Dead-end states trigger a logged restart from the
    initial distribution instead of aborting. The walk itself runs in the
    kernel backend, consuming pre-drawn uniforms from ``rng``.
    """
    from trajgen import kernels

    if steps < 1:
        raise ValueError("steps must be >= 1")
    row_ptr, dests, cums, newest, mem_ptr, mem_data, centroids, uniform_cum = \
        chain._csr
    initial_cum = uniform_cum if uniform_start else chain._initial_cum
    out = np.empty((steps, 2), dtype=np.float64)
    ids = np.empty(steps, dtype=np.int64)
    state = int(initial_state) if initial_state is not None \
        else _draw_initial(chain, rng, uniform_start)
    k = 0
    total_restarts = 0
    while True:
        buf = rng.random(max(2 * (steps - k) + 64, 256))
        k, state, _, status, restarts = kernels.chain_walk(
            row_ptr, dests, cums, initial_cum, newest, mem_ptr, mem_data,
            centroids, out, ids, state, k, buf)
        total_restarts += int(restarts)
        if status == 2:
            raise RuntimeError("no reachable state has outgoing transitions")
        if status == 1:
            break
    if total_restarts:
        log.debug("chain sampling restarted %d times from the initial distribution",
                  total_restarts)
    return out, ids, int(state), total_restarts


def sample_trajectory(chain: MarkovChain, steps: int, start: Pose,
                      seed: int, uniform_start: bool = False) -> Trajectory:
    """Generate a synthetic trajectory of ``steps + 1`` points from ``start``."""
    rng = np.random.default_rng(seed)
    offsets, _, _, _ = sample_offsets(chain, steps, rng, uniform_start=uniform_start)
    return from_offsets(start, offsets)
