import math

import numpy as np
import numpy.testing as npt
import pytest

from trajgen.chain import estimate, fit_clusters, sample_offsets, sample_trajectory
from trajgen.geometry import Pose, from_offsets

from conftest import make_chain, momentum_walk_trajectories


def lloyd_oracle(points, init_centers, iters=200):
    """Plain Lloyd iteration used as an independent reference."""
    centers = np.array(init_centers, dtype=float)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        ids = d2.argmin(axis=1)
        new = np.array([points[ids == k].mean(axis=0) if (ids == k).any()
                        else centers[k] for k in range(len(centers))])
        if np.allclose(new, centers, atol=1e-15):
            break
        centers = new
    return centers


class TestFitClusters:
    def test_single_cluster_is_mean(self):
        rng = np.random.default_rng(0)
        offs = np.column_stack([rng.uniform(0, 2, 50), rng.uniform(-1, 1, 50)])
        model = fit_clusters(offs, 1, seed=0)
        npt.assert_allclose(model.centroids[0], offs.mean(axis=0), atol=1e-12)

    def test_two_blobs_match_exhaustive_restarts(self):
        rng = np.random.default_rng(1)
        blob_a = rng.normal([1.0, 0.0], 0.05, size=(30, 2))
        blob_b = rng.normal([5.0, 1.0], 0.05, size=(30, 2))
        blob_a[:, 1] = np.clip(blob_a[:, 1], -math.pi, math.pi)
        offs = np.abs(np.vstack([blob_a, blob_b]))
        model = fit_clusters(offs, 2, seed=3)
        got = model.centroids[np.argsort(model.centroids[:, 0])]
        npt.assert_allclose(got[0], np.abs(blob_a).mean(axis=0), atol=0.05)
        npt.assert_allclose(got[1], np.abs(blob_b).mean(axis=0), atol=0.05)
        # exhaustive restart oracle: every pair of distinct points as init
        best = None
        for i in range(0, len(offs), 7):
            for j in range(1, len(offs), 11):
                if np.allclose(offs[i], offs[j]):
                    continue
                centers = lloyd_oracle(offs, [offs[i], offs[j]])
                d2 = ((offs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
                cost = d2.min(axis=1).sum()
                if best is None or cost < best[0]:
                    best = (cost, centers)
        oracle = best[1][np.argsort(best[1][:, 0])]
        npt.assert_allclose(got, oracle, atol=1e-6)

    def test_members_cover_all_offsets(self):
        rng = np.random.default_rng(2)
        offs = np.column_stack([rng.uniform(0, 2, 200), rng.uniform(-1, 1, 200)])
        model = fit_clusters(offs, 8, seed=0)
        assert sum(len(m) for m in model.members) == len(offs)
        for k, mem in enumerate(model.members):
            assert len(mem) > 0
            npt.assert_array_equal(model.assign(mem), k)

    def test_errors(self):
        offs = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(ValueError):
            fit_clusters(offs, 3, seed=0)  # only 2 distinct offsets
        with pytest.raises(ValueError):
            fit_clusters(offs, 4, seed=0)  # more clusters than offsets
        with pytest.raises(ValueError):
            fit_clusters(offs, 0, seed=0)


class TestEstimate:
    def make_ab_trajectory(self):
        # cluster-id sequence A,A,B,A,A,B with A=(1,0), B=(2,0)
        offs = np.array([[1.0, 0.0]] * 2 + [[2.0, 0.0]] +
                        [[1.0, 0.0]] * 2 + [[2.0, 0.0]])
        return from_offsets(Pose(0, 0, math.pi / 2), offs)

    def test_hand_counted_probabilities(self):
        chain = estimate([self.make_ab_trajectory()], c=2, n=1,
                         noise_filter=None, seed=0)
        id_a = int(chain.clusters.assign(np.array([[1.0, 0.0]]))[0])
        id_b = int(chain.clusters.assign(np.array([[2.0, 0.0]]))[0])
        state_a = chain.state_for_ids([id_a])
        state_b = chain.state_for_ids([id_b])
        dests_a, probs_a, _ = chain.transitions[state_a]
        row_a = dict(zip(dests_a.tolist(), probs_a.tolist()))
        assert row_a[state_a] == 0.5  # exact: 2 of 4 outgoing counts
        assert row_a[state_b] == 0.5
        dests_b, probs_b, _ = chain.transitions[state_b]
        assert dests_b.tolist() == [state_a]
        assert probs_b[0] == 1.0

    def test_self_loop(self):
        offs = np.array([[1.0, 0.0]] * 6)
        chain = estimate([from_offsets(Pose(0, 0, 0), offs)], c=1, n=1,
                         noise_filter=None, seed=0)
        dests, probs, _ = chain.transitions[0]
        assert probs[0] == 1.0 and dests[0] == 0

    def test_rows_stochastic(self, demo_chain):
        for _, (_, probs, _) in demo_chain.transitions.items():
            assert abs(probs.sum() - 1.0) <= 1e-9
            assert (probs >= 0).all()
        assert abs(demo_chain.initial_probs.sum() - 1.0) <= 1e-9

    def test_state_space_bound(self, demo_chain):
        assert demo_chain.n_states <= 40 ** 2

    def test_permutation_stability(self, demo_trajectories):
        rng = np.random.default_rng(5)
        shuffled = list(demo_trajectories)
        rng.shuffle(shuffled)
        a = estimate(demo_trajectories, c=12, n=2, seed=0)
        b = estimate(shuffled, c=12, n=2, seed=0)
        npt.assert_array_equal(a.clusters.centroids, b.clusters.centroids)
        npt.assert_array_equal(a.grams, b.grams)
        npt.assert_array_equal(a.initial_probs, b.initial_probs)
        assert a.transitions.keys() == b.transitions.keys()
        for src in a.transitions:
            npt.assert_array_equal(a.transitions[src][0], b.transitions[src][0])
            npt.assert_array_equal(a.transitions[src][1], b.transitions[src][1])

    def test_never_counts_across_trajectories(self):
        # two trajectories ending A->B and starting B->A would fabricate a
        # B->B transition if windows crossed the boundary
        t1 = from_offsets(Pose(0, 0, 0), np.array([[1.0, 0.0], [2.0, 0.0]]))
        t2 = from_offsets(Pose(0, 0, 0), np.array([[2.0, 0.0], [1.0, 0.0]]))
        chain = estimate([t1, t2], c=2, n=1, noise_filter=None, seed=0)
        id_b = int(chain.clusters.assign(np.array([[2.0, 0.0]]))[0])
        state_b = chain.state_for_ids([id_b])
        if state_b in chain.transitions:
            dests, _, _ = chain.transitions[state_b]
            assert state_b not in dests.tolist()

    def test_no_transitions_error(self):
        t = from_offsets(Pose(0, 0, 0), np.array([[1.0, 0.0], [1.2, 0.0]]))
        with pytest.raises(ValueError):
            estimate([t], c=2, n=2, noise_filter=None, seed=0)

    def test_default_order_is_two(self, demo_chain):
        assert demo_chain.order == 2
        assert demo_chain.grams.shape[1] == 2


class TestSampling:
    def test_straight_chain_line(self, straight_chain):
        traj = sample_trajectory(straight_chain, 10, Pose(0, 0, math.pi / 2), seed=0)
        assert len(traj) == 11
        npt.assert_allclose(np.diff(traj.points, axis=0),
                            np.tile([0.0, 1.0], (10, 1)), atol=1e-12)

    def test_determinism(self, demo_chain):
        a = sample_trajectory(demo_chain, 100, Pose(0, 0, 0), seed=42)
        b = sample_trajectory(demo_chain, 100, Pose(0, 0, 0), seed=42)
        assert a.points.tobytes() == b.points.tobytes()
        c = sample_trajectory(demo_chain, 100, Pose(0, 0, 0), seed=43)
        assert a.points.tobytes() != c.points.tobytes()

    def test_two_state_frequencies(self, two_state_chain):
        rng = np.random.default_rng(0)
        _, ids, _, _ = sample_offsets(two_state_chain, 100_000, rng)
        pairs = np.column_stack([ids[:-1], ids[1:]])
        for src in (0, 1):
            sel = pairs[pairs[:, 0] == src]
            dests, probs, _ = two_state_chain.transitions[src]
            for dst, p in zip(dests, probs):
                freq = (sel[:, 1] == dst).mean()
                assert abs(freq - p) < 0.02

    def test_emitted_offsets_inside_member_bbox(self, demo_chain):
        rng = np.random.default_rng(1)
        offs, ids, _, _ = sample_offsets(demo_chain, 2000, rng)
        for k in np.unique(ids):
            mem = demo_chain.clusters.members[int(k)]
            sel = offs[ids == k]
            assert (sel[:, 0] >= mem[:, 0].min() - 1e-12).all()
            assert (sel[:, 0] <= mem[:, 0].max() + 1e-12).all()
            assert (sel[:, 1] >= mem[:, 1].min() - 1e-12).all()
            assert (sel[:, 1] <= mem[:, 1].max() + 1e-12).all()

    def test_emitted_ngrams_are_states(self, demo_chain):
        rng = np.random.default_rng(3)
        _, ids, _, restarts = sample_offsets(demo_chain, 5000, rng)
        assert restarts == 0, "pick a restart-free seed for the support check"
        n = demo_chain.order
        for k in range(len(ids) - n + 1):
            assert demo_chain.state_for_ids(ids[k:k + n]) is not None

    def test_dead_end_restart(self):
        # state 1 is reachable but has no outgoing row
        chain = make_chain(
            centroids=[[1.0, 0.0], [2.0, 0.0]],
            transitions={0: ([0, 1], [0.5, 0.5])},
            initial=[0.9, 0.1],
        )
        rng = np.random.default_rng(3)
        offs, ids, _, restarts = sample_offsets(chain, 500, rng)
        assert len(offs) == 500
        assert restarts > 0

    def test_centroid_fallback_without_members(self):
        chain = make_chain(
            centroids=[[1.5, 0.2]],
            transitions={0: ([0], [1.0])},
            initial=[1.0],
            members=[np.empty((0, 2))],
        )
        rng = np.random.default_rng(4)
        offs, _, _, _ = sample_offsets(chain, 10, rng)
        npt.assert_allclose(offs, np.tile([1.5, 0.2], (10, 1)), atol=1e-12)

    def test_steps_validation(self, straight_chain):
        with pytest.raises(ValueError):
            sample_offsets(straight_chain, 0, np.random.default_rng(0))


class TestChainValidation:
    def test_bad_row_rejected(self):
        with pytest.raises(ValueError):
            make_chain(
                centroids=[[1.0, 0.0]],
                transitions={0: ([0], [0.5])},  # does not sum to 1
                initial=[1.0],
            )

    def test_bad_initial_rejected(self):
        with pytest.raises(ValueError):
            make_chain(
                centroids=[[1.0, 0.0]],
                transitions={0: ([0], [1.0])},
                initial=[0.7],
            )
