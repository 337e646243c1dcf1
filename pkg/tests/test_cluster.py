import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_rand_score

from kdecluster.cluster import (ConvergenceError, ResampleNeeded, adjusted_rand_index,
                                approximate_similarity_graph, default_samples_per_vertex,
                                kmeans, lloyd_kmeans, sample_neighbor, similarity_graph,
                                spectral_cluster, spectral_embed)
from kdecluster.datasets import make_blobs, make_moons
from kdecluster.graph import graph_from_edge_list, laplacian
from kdecluster.kde import CKNSEstimator, ExactKDE


def random_graph(rng, n, p=0.1):
    edges = [(i, j, float(rng.uniform(0.1, 1.0)))
             for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return graph_from_edge_list(n, edges)


def cliques(sizes):
    edges, base = [], 0
    for s in sizes:
        edges += [(base + i, base + j, 1.0) for i in range(s) for j in range(i + 1, s)]
        base += s
    return graph_from_edge_list(base, edges)


class TestSimilarityGraph:
    def test_coincident_pair(self):
        g = similarity_graph(np.zeros((2, 3)), 1.0)
        assert g.number_of_edges == 1
        assert g.adjacency[0, 1] == 1.0

    def test_weights(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((60, 3))
        A = similarity_graph(X, 0.7, block_size=16).adjacency
        assert (A != A.T).nnz == 0
        assert A.nnz == 60 * 59
        assert np.all((A.data > 0) & (A.data <= 1))
        i, j = 3, 41
        assert A[i, j] == pytest.approx(math.exp(-0.7 * np.sum((X[i] - X[j]) ** 2)),
                                        rel=1e-12)

    def test_degree_is_shifted_density(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((150, 4))
        g = similarity_graph(X, 0.3)
        dens = ExactKDE(X, 0.3).query_batch(X)
        np.testing.assert_allclose(g.degrees() + 1, 150 * dens, rtol=0, atol=1e-10)

    def test_too_small(self):
        with pytest.raises(ValueError):
            similarity_graph(np.zeros((1, 2)), 1.0)


class TestSampleNeighbor:
    def test_only_other_point(self):
        X = np.array([[0.0, 0.0], [0.3, 0.4]])
        est = CKNSEstimator(X, 1.0, K1=2, seed=0)
        rng = np.random.default_rng(0)
        assert all(sample_neighbor(est, X[0], rng, exclude=0) == 1 for _ in range(50))

    def test_never_returns_self(self):
        X, _ = make_blobs(200, 2, 2, seed=0)
        est = CKNSEstimator(X, 0.5, K1=2, seed=1)
        rng = np.random.default_rng(1)
        for _ in range(200):
            try:
                assert sample_neighbor(est, X[7], rng, exclude=7) != 7
            except ResampleNeeded:
                pass

    def test_resample_signal(self):
        X = np.array([[0.0], [100.0]])
        est = CKNSEstimator(X, 1.0, K1=1, seed=0)
        with pytest.raises(ResampleNeeded):
            sample_neighbor(est, X[0], np.random.default_rng(0), exclude=0)

    def test_pick_frequencies(self):
        # Both neighbours lie in the unsampled top band, so pick
        # frequencies follow the kernel weights.
        X = np.array([[0.0], [0.3], [0.7]])
        a = 1.0
        k = np.exp(-a * np.array([0.09, 0.49]))
        target = k / k.sum()
        counts = np.zeros(3)
        rng = np.random.default_rng(5)
        for b in range(100):
            est = CKNSEstimator(X, a, K1=1, seed=b)
            for _ in range(1000):
                counts[sample_neighbor(est, X[0], rng, exclude=0)] += 1
        freq = counts / counts.sum()
        assert freq[0] == 0
        np.testing.assert_allclose(freq[1:], target, atol=0.03)


class TestApproximateGraph:
    def test_two_blobs_recovered(self):
        X, y = make_blobs(2000, 4, 2, seed=3)
        g = approximate_similarity_graph(X, 1 / 8, seed=0)
        labels = spectral_cluster(g, 2, seed=0)
        assert adjusted_rand_index(labels, y) == 1.0

    def test_edge_bound(self):
        X, _ = make_blobs(500, 3, 5, seed=4)
        for t in (None, 1, 5):
            g = approximate_similarity_graph(X, 0.2, t=t, seed=1)
            tt = default_samples_per_vertex(500) if t is None else t
            assert g.number_of_edges <= 2 * tt * 500

    def test_two_points_exact_weight(self):
        X = np.array([[0.0, 0.0], [0.5, 0.5]])
        g = approximate_similarity_graph(X, 1.0, seed=0)
        assert g.number_of_edges == 1
        assert g.adjacency[0, 1] == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_symmetric_positive(self):
        X, _ = make_blobs(300, 2, 3, seed=5)
        A = approximate_similarity_graph(X, 0.5, seed=2).adjacency
        assert (A != A.T).nnz == 0
        assert A.diagonal().sum() == 0
        assert np.all(A.data > 0)

    def test_deterministic(self):
        X, _ = make_blobs(400, 3, 3, seed=6)
        a = approximate_similarity_graph(X, 0.3, seed=7).adjacency
        b = approximate_similarity_graph(X, 0.3, seed=7, chunk_size=37).adjacency
        assert (a != b).nnz == 0
        np.testing.assert_array_equal(a.data, b.data)

    def test_total_weight_close_to_full(self):
        X, _ = make_blobs(1000, 3, 4, seed=0)
        full = similarity_graph(X, 0.2).degrees().sum()
        approx = np.mean([approximate_similarity_graph(X, 0.2, seed=s).degrees().sum()
                          for s in range(3)])
        assert 0.8 <= approx / full <= 1.1

    @pytest.mark.parametrize("t", [0, -3, 2.5])
    def test_invalid_t(self, t):
        with pytest.raises(ValueError):
            approximate_similarity_graph(np.zeros((3, 2)), 1.0, t=t)

    def test_too_small(self):
        with pytest.raises(ValueError):
            approximate_similarity_graph(np.zeros((1, 2)), 1.0)

    def test_moons(self):
        X, y = make_moons(1000, 0.05, seed=1)
        g = approximate_similarity_graph(X, 20.0, seed=0)
        assert adjusted_rand_index(spectral_cluster(g, 2, seed=0), y) >= 0.95


class TestSpectralEmbed:
    def test_two_disjoint_edges(self):
        g = graph_from_edge_list(4, [(0, 1, 1.0), (2, 3, 1.0)])
        emb = spectral_embed(g, 2)
        np.testing.assert_allclose(emb.values, [0, 0], atol=1e-12)
        indicators = np.array([[1, 1, 0, 0], [0, 0, 1, 1]]).T / math.sqrt(2)
        # Projection onto the indicator space leaves the vectors unchanged.
        P = indicators @ indicators.T
        np.testing.assert_allclose(P @ emb.vectors, emb.vectors, atol=1e-10)

    def test_path_kernel(self):
        g = graph_from_edge_list(3, [(0, 1, 1.0), (1, 2, 1.0)])
        for method in ("dense", "iterative"):
            emb = spectral_embed(g, 1, method=method)
            assert abs(emb.values[0]) < 1e-10
            v = emb.vectors[:, 0]
            expected = np.sqrt([1.0, 2.0, 1.0])
            expected /= np.linalg.norm(expected)
            assert abs(abs(v @ expected) - 1) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_iterative_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(30, 200))
        g = random_graph(rng, n, p=0.15)
        k = int(rng.integers(1, 6))
        N = laplacian(g, normalized=True).toarray()
        all_values = np.linalg.eigvalsh(N)
        emb = spectral_embed(g, k, method="iterative", seed=seed)
        np.testing.assert_allclose(emb.values, all_values[:k], atol=1e-6)
        assert np.all(np.diff(emb.values) >= -1e-12)
        res = np.linalg.norm(N @ emb.vectors - emb.vectors * emb.values, axis=0)
        assert np.all(res <= 1e-6)
        np.testing.assert_allclose(emb.vectors.T @ emb.vectors, np.eye(k), atol=1e-6)
        # Eigenvectors agree with the oracle's where the eigenvalue is simple.
        vals, vecs = np.linalg.eigh(N)
        for c in range(k):
            gaps = np.abs(np.delete(vals, c) - vals[c])
            if gaps.min() > 1e-3:
                assert abs(abs(emb.vectors[:, c] @ vecs[:, c]) - 1) < 1e-6

    def test_unnormalized(self):
        rng = np.random.default_rng(9)
        g = random_graph(rng, 60, 0.2)
        L = laplacian(g).toarray()
        emb = spectral_embed(g, 3, normalized=False, method="iterative")
        np.testing.assert_allclose(emb.values, np.linalg.eigvalsh(L)[:3], atol=1e-6)

    def test_dense_and_iterative_agree(self):
        rng = np.random.default_rng(10)
        g = random_graph(rng, 100, 0.1)
        a = spectral_embed(g, 4, method="dense")
        b = spectral_embed(g, 4, method="iterative")
        np.testing.assert_allclose(a.values, b.values, atol=1e-8)

    @pytest.mark.parametrize("k", [0, 5])
    def test_k_out_of_range(self, k):
        with pytest.raises(ValueError):
            spectral_embed(graph_from_edge_list(4, []), k)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            spectral_embed(graph_from_edge_list(4, []), 1, method="lanczos")

    def test_non_convergence_reports_iterations(self):
        rng = np.random.default_rng(11)
        g = random_graph(rng, 80, 0.1)
        with pytest.raises(ConvergenceError) as info:
            spectral_embed(g, 3, method="iterative", max_iter=2)
        assert info.value.iterations == 2
        assert "2 iterations" in str(info.value)


class TestKMeans:
    def test_each_point_own_cluster(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((12, 3))
        res = lloyd_kmeans(X, 12, rng)
        assert len(np.unique(res.labels)) == 12
        assert res.objective == 0.0

    def test_two_clouds(self):
        rng = np.random.default_rng(1)
        X = np.vstack([rng.standard_normal((50, 2)), rng.standard_normal((70, 2)) + 100])
        labels = kmeans(X, 2, seed=0)
        assert len(set(labels[:50])) == 1 and len(set(labels[50:])) == 1
        assert labels[0] != labels[-1]

    def test_labels_in_range(self):
        X, _ = make_blobs(300, 2, 5, seed=2)
        labels = kmeans(X, 5, seed=0)
        assert labels.min() >= 0 and labels.max() < 5

    def test_deterministic(self):
        X, _ = make_blobs(300, 2, 5, seed=2)
        np.testing.assert_array_equal(kmeans(X, 5, seed=3), kmeans(X, 5, seed=3))

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 4)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 60), st.integers(1, 4), st.integers(1, 6),
           st.integers(0, 2**32 - 1))
    def test_objective_monotone(self, n, d, k, seed):
        k = min(k, n)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, d)) * rng.uniform(0.1, 10)
        res = lloyd_kmeans(X, k, rng)
        assert np.all(np.diff(res.history) <= 0)
        assert res.objective <= res.history[0]
        assert res.labels.min() >= 0 and res.labels.max() < k


class TestSpectralCluster:
    def test_two_cliques(self):
        labels = spectral_cluster(cliques([5, 5]), 2, seed=0)
        assert len(set(labels[:5])) == 1 and len(set(labels[5:])) == 1
        assert labels[0] != labels[5]

    def test_k_one(self):
        labels = spectral_cluster(cliques([3, 4]), 1)
        np.testing.assert_array_equal(labels, np.zeros(7))

    def test_seed_reproducible(self):
        X, _ = make_blobs(300, 2, 3, seed=8)
        g = similarity_graph(X, 0.5)
        np.testing.assert_array_equal(spectral_cluster(g, 3, seed=1),
                                      spectral_cluster(g, 3, seed=1))

    def test_iterative_path(self):
        X, y = make_blobs(800, 2, 4, seed=9)
        g = similarity_graph(X, 0.25)
        labels = spectral_cluster(g, 4, seed=0, method="iterative")
        assert adjusted_rand_index(labels, y) == 1.0


class TestARI:
    def test_identical_and_permuted(self):
        a = np.array([0, 0, 1, 1, 2, 2])
        assert adjusted_rand_index(a, a) == 1.0
        assert adjusted_rand_index(a, (a + 1) % 3) == 1.0

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            adjusted_rand_index([0, 1], [0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)),
                    min_size=2, max_size=60))
    def test_matches_sklearn(self, pairs):
        a, b = map(np.array, zip(*pairs))
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b),
                                                          abs=1e-12)
