"""Similarity graphs and spectral clustering.

``similarity_graph`` builds the fully connected Gaussian graph.
``approximate_similarity_graph`` samples a sparse graph with the same
cluster structure: each vertex draws ``t`` neighbours with probability
roughly proportional to the edge weight, using a ``CKNSEstimator`` both for
the degree estimates and for the draws themselves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .data import DataPoint, as_matrix, as_point
from ._rng import seed_sequence
from .graph import SparseGraph, laplacian
from .kde import CKNSEstimator

log = logging.getLogger(__name__)

MAX_RESAMPLE = 16


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} after {iterations} iterations")
        self.iterations = iterations


class ResampleNeeded(Exception):
    """The chosen estimator copy recovered no neighbour; retry with a fresh
    random stream."""


# ---------------------------------------------------------------------------
# Similarity graphs
# ---------------------------------------------------------------------------

def similarity_graph(data, a: float, *, block_size: int = 256) -> SparseGraph:
    """Complete graph with weights ``exp(-a ||x_i - x_j||^2)``.

    Uses ``n (n - 1)`` stored entries; for large ``n`` this is the memory
    bottleneck.
    """
    X = as_matrix(data)
    n = X.shape[0]
    if n < 2:
        raise ValueError("similarity graph needs at least two points")
    if not a > 0:
        raise ValueError("bandwidth a must be positive")
    sq = np.einsum("ij,ij->i", X, X)
    indptr = np.arange(n + 1, dtype=np.int64) * (n - 1)
    idx_dtype = np.int32 if n * (n - 1) < 2**31 else np.int64
    indices = np.empty(n * (n - 1), dtype=idx_dtype)
    weights = np.empty(n * (n - 1))
    cols = np.arange(n)
    for s in range(0, n, block_size):
        e = min(n, s + block_size)
        # einsum gives gram[i, j] == gram[j, i] bit for bit, so the weights
        # are exactly symmetric.
        gram = np.einsum("ik,jk->ij", X[s:e], X)
        d2 = np.maximum(sq[s:e, None] + sq[None, :] - 2.0 * gram, 0.0)
        w = np.exp(-a * d2)
        off = ~np.eye(e - s, n, k=s, dtype=bool)
        lo, hi = indptr[s], indptr[e]
        indices[lo:hi] = np.broadcast_to(cols, (e - s, n))[off]
        weights[lo:hi] = w[off]
    A = sp.csr_matrix((weights, indices, indptr), shape=(n, n))
    return SparseGraph(A, check=False)


def _vertex_rng(entropy: int, vertex: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(vertex,)))


def _pick(cum: np.ndarray, total: float, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cum, u * total, side="right"), len(cum) - 1)


def sample_neighbor(estimator: CKNSEstimator, q: DataPoint, rng: np.random.Generator,
                    *, exclude: int | None = None) -> int:
    """Draw a data index with probability roughly proportional to its kernel
    value at ``q``.

    A copy of the estimator is chosen uniformly at random; within it, a
    recovered point is chosen in proportion to its reweighted contribution
    to the density estimate (equivalently: a level in proportion to the
    level's total, then a point within the level).  ``exclude`` (the index
    of ``q`` itself, if it is a data point) is never returned.

    Raises :class:`ResampleNeeded` when the chosen copy recovered nothing.
    """
    q = as_point(q)[None, :]
    c = int(rng.integers(estimator.K1))
    xs, ws = [], []
    for lvl in estimator.copies[c]:
        _, xi, w = estimator._level_contributions(lvl, q)
        xs.append(xi)
        ws.append(w)
    xi = np.concatenate(xs)
    w = np.concatenate(ws)
    if exclude is not None:
        keep = xi != exclude
        xi, w = xi[keep], w[keep]
    total = w.sum()
    if not total > 0:
        raise ResampleNeeded
    cum = np.cumsum(w)
    return int(xi[_pick(cum, cum[-1], np.array([rng.random()]))[0]])


def default_samples_per_vertex(n: int) -> int:
    return max(1, math.ceil(4 * math.log2(max(n, 2))))


def approximate_similarity_graph(data, a: float, t: int | None = None, seed=None, *,
                                 K1: int = 2, min_mu: float | None = None,
                                 K2_constant: float = 5.0,
                                 p_offset: int = 0, chunk_size: int = 256,
                                 estimator: CKNSEstimator | None = None) -> SparseGraph:
    """Sparse graph approximating ``similarity_graph(data, a)``.

    Every vertex ``i`` draws ``t`` neighbours (default ``ceil(4 log2 n)``)
    with :func:`sample_neighbor`.  A drawn pair gets weight ``w / p``, with
    ``w`` the exact kernel value and ``p = 1 - (1 - q_i)(1 - q_j)`` where
    ``q_i = min(1, t w / deg_i)`` uses the estimated degree
    ``deg_i = n * kde(x_i) - 1``.  A pair drawn several times is kept once.

    Degrees and draws come from a :class:`CKNSEstimator` with ``K1`` copies.
    The sampling only needs degrees to within a constant factor, so the
    default of 2 copies is far below what accurate density estimates need.
    Pass ``estimator`` to reuse a prebuilt one.
    """
    X = as_matrix(data)
    n = X.shape[0]
    if n < 2:
        raise ValueError("approximate similarity graph needs at least two points")
    if t is None:
        t = default_samples_per_vertex(n)
    if t < 1 or int(t) != t:
        raise ValueError("samples per vertex t must be a positive integer")
    t = int(t)

    root = seed_sequence(seed)
    kde_ss, draw_ss = root.spawn(2)
    if estimator is None:
        estimator = CKNSEstimator(X, a, min_mu=min_mu, K1=K1,
                                  K2_constant=K2_constant, p_offset=p_offset,
                                  seed=kde_ss)
    entropy = draw_ss.generate_state(2, dtype=np.uint64)
    entropy = int(entropy[0]) << 64 | int(entropy[1])
    K1 = estimator.K1

    est_degree = np.empty(n)
    src: List[np.ndarray] = []
    dst: List[np.ndarray] = []
    for s in range(0, n, chunk_size):
        block = X[s:s + chunk_size]
        m = len(block)
        qs, xs, ws, cs = [], [], [], []
        for c, copy in enumerate(estimator.copies):
            for lvl in copy:
                qi, xi, w = estimator._level_contributions(lvl, block)
                qs.append(qi)
                xs.append(xi)
                ws.append(w)
                cs.append(np.full(len(qi), c))
        qi = np.concatenate(qs)
        xi = np.concatenate(xs)
        w = np.concatenate(ws)
        ci = np.concatenate(cs)
        density = np.bincount(qi, weights=w, minlength=m) / (K1 * n)
        est_degree[s:s + m] = n * np.maximum(density, 0.0) - 1.0

        keep = xi != qi + s
        qi, xi, w, ci = qi[keep], xi[keep], w[keep], ci[keep]
        key = qi * K1 + ci
        order = np.argsort(key, kind="stable")
        key, xi, w = key[order], xi[order], w[order]
        bounds = np.searchsorted(key, np.arange(m * K1 + 1))

        for r in range(m):
            v = s + r
            rng = _vertex_rng(entropy, v)
            segs = [(bounds[r * K1 + c], bounds[r * K1 + c + 1]) for c in range(K1)]
            cums = [np.cumsum(w[lo:hi]) for lo, hi in segs]
            totals = np.array([cm[-1] if len(cm) else 0.0 for cm in cums])
            picked = np.full(t, -1, dtype=np.int64)
            pending = np.arange(t)
            for _ in range(MAX_RESAMPLE):
                if not len(pending):
                    break
                copies = rng.integers(K1, size=len(pending))
                u = rng.random(len(pending))
                ok = totals[copies] > 0
                for c in np.unique(copies[ok]):
                    sel = ok & (copies == c)
                    lo = segs[c][0]
                    picked[pending[sel]] = xi[lo + _pick(cums[c], totals[c], u[sel])]
                pending = pending[~ok]
            if len(pending):
                picked[pending] = _exact_draws(X, a, v, len(pending), rng, estimator)
            picked = picked[picked >= 0]
            src.append(np.full(len(picked), v))
            dst.append(picked)

    i = np.concatenate(src)
    j = np.concatenate(dst)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    pairs = np.unique(lo * n + hi)
    lo, hi = pairs // n, pairs % n
    diff = X[lo] - X[hi]
    w = np.exp(-a * np.einsum("ij,ij->i", diff, diff))
    q_lo = _keep_rate(t, w, est_degree[lo])
    q_hi = _keep_rate(t, w, est_degree[hi])
    p_hat = 1.0 - (1.0 - q_lo) * (1.0 - q_hi)
    weight = w / p_hat
    positive = weight > 0
    return SparseGraph.from_upper(n, lo[positive], hi[positive], weight[positive])


def _keep_rate(t: int, w: np.ndarray, deg: np.ndarray) -> np.ndarray:
    positive = deg > 0
    return np.where(positive, np.minimum(1.0, t * w / np.where(positive, deg, 1.0)), 1.0)


def _exact_draws(X: np.ndarray, a: float, v: int, count: int,
                 rng: np.random.Generator, estimator: CKNSEstimator) -> np.ndarray:
    """Fallback when no estimator copy recovered a neighbour of ``v``: draw
    from the exact kernel weights, at a cost of ``n`` evaluations."""
    diff = X - X[v]
    w = np.exp(-a * np.einsum("ij,ij->i", diff, diff))
    w[v] = 0.0
    estimator._counter.add(len(X))
    total = w.sum()
    if not total > 0:
        log.warning("vertex %d has no neighbour with positive weight; "
                    "skipping %d draws", v, count)
        return np.full(count, -1)
    log.debug("vertex %d: exact fallback for %d draws", v, count)
    cum = np.cumsum(w)
    return _pick(cum, cum[-1], rng.random(count))


# ---------------------------------------------------------------------------
# Spectral embedding
# ---------------------------------------------------------------------------

@dataclass
class SpectralEmbedding:
    """Bottom ``k`` Laplacian eigenpairs; row ``i`` of ``vectors`` embeds
    vertex ``i``."""

    vectors: np.ndarray
    values: np.ndarray
    iterations: int = 0


def _laplacian_operator(g: SparseGraph, normalized: bool):
    A = g.adjacency
    if normalized:
        s = 1.0 / np.sqrt(np.where(g.degrees() > 0, g.degrees(), 1.0))
        s[g.degrees() == 0] = 0.0
        s = s[:, None]

        def apply(V):
            return V - s * (A @ (s * V))

        return apply, 2.0
    deg = g.degrees()[:, None]

    def apply(V):
        return deg * V - A @ V

    return apply, 2.0 * float(deg.max(initial=0.0)) + 1.0


def _bottom_eigenpairs(apply, upper: float, n: int, k: int, tol: float,
                       max_iter: int, rng: np.random.Generator):
    """Smallest ``k`` eigenpairs of a symmetric operator with spectrum in
    ``[0, upper]``, by block orthogonal iteration on ``upper*I - M`` with a
    Rayleigh-Ritz step each iteration."""
    b = min(n, k + max(8, k))
    V, _ = np.linalg.qr(rng.standard_normal((n, b)))
    for it in range(1, max_iter + 1):
        W = apply(V)
        H = V.T @ W
        theta, S = np.linalg.eigh(0.5 * (H + H.T))
        V = V @ S
        W = W @ S
        res = np.linalg.norm(W[:, :k] - V[:, :k] * theta[:k], axis=0)
        if np.all(res <= tol):
            return theta[:k], V[:, :k], it
        V, _ = np.linalg.qr(upper * V - W)
    raise ConvergenceError("eigensolver did not converge", max_iter)


def spectral_embed(g: SparseGraph, k: int, *, normalized: bool = True,
                   method: str = "auto", tol: float = 1e-8,
                   max_iter: int | None = None, seed=0) -> SpectralEmbedding:
    """Eigenvectors of the ``k`` smallest Laplacian eigenvalues.

    ``method`` is ``"dense"`` (full symmetric eigendecomposition),
    ``"iterative"`` (block orthogonal iteration) or ``"auto"``, which picks
    dense for ``n <= 500``.
    """
    n = g.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if method == "auto":
        method = "dense" if n <= 500 else "iterative"
    if method == "dense":
        M = laplacian(g, normalized).toarray()
        values, vectors = scipy.linalg.eigh(M, subset_by_index=(0, k - 1))
        return SpectralEmbedding(vectors, values, 0)
    if method != "iterative":
        raise ValueError(f"unknown eigensolver method {method!r}")
    apply, upper = _laplacian_operator(g, normalized)
    if max_iter is None:
        max_iter = 10 * n
    values, vectors, iters = _bottom_eigenpairs(
        apply, upper, n, k, tol, max_iter, np.random.default_rng(seed))
    return SpectralEmbedding(vectors, values, iters)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    history: List[float] = field(default_factory=list)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = (np.einsum("ij,ij->i", X, X)[:, None] + np.einsum("ij,ij->i", C, C)[None, :]
          - 2.0 * X @ C.T)
    return np.maximum(d2, 0.0)


def _objective(X: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = X - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen[0]][None, :])[:, 0]
    d2[chosen[0]] = 0.0
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(_pick(np.cumsum(d2), total, np.array([rng.random()]))[0])
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(len(free))])
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[idx][None, :])[:, 0])
        d2[chosen] = 0.0
    return X[chosen].copy()


def lloyd_kmeans(points, k: int, rng: np.random.Generator, *, max_iter: int = 300,
                 tol: float = 1e-6) -> KMeansResult:
    """One run of Lloyd's algorithm from k-means++ seeds.

    Stops when the objective's relative decrease falls below ``tol`` or
    after ``max_iter`` assignment steps.  ``history`` holds the objective
    after every assignment step and never increases.
    """
    X = as_matrix(points)
    centers = _kmeans_pp(X, k, rng)
    history: List[float] = []
    prev_labels = None
    for _ in range(max_iter):
        labels = np.argmin(_sq_dists(X, centers), axis=1)
        obj = _objective(X, centers, labels)
        if prev_labels is not None:
            # Rounding in the expanded distances can flip near-ties; never
            # accept an assignment worse than keeping the previous one.
            kept = _objective(X, centers, prev_labels)
            if kept < obj:
                labels, obj = prev_labels, kept
        history.append(obj)
        if len(history) > 1 and history[-2] - obj <= tol * history[-2]:
            break
        prev_labels = labels.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        for c in np.flatnonzero(~nonempty):
            # Move an empty cluster onto the point farthest from its centre.
            far = int(np.argmax(np.einsum("ij,ij->i", X - centers[labels],
                                          X - centers[labels])))
            centers[c] = X[far]
            labels[far] = c
    return KMeansResult(labels, centers, _objective(X, centers, labels), history)


def kmeans(points, k: int, seed=None, *, n_init: int = 10, max_iter: int = 300,
           tol: float = 1e-6) -> np.ndarray:
    """Cluster labels in ``[0, k)`` from the best of ``n_init`` k-means++
    seeded Lloyd runs."""
    X = as_matrix(points)
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k must lie in [1, {X.shape[0]}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        result = lloyd_kmeans(X, k, rng, max_iter=max_iter, tol=tol)
        if best is None or result.objective < best.objective:
            best = result
    return best.labels


def spectral_cluster(g: SparseGraph, k: int, seed=0, *, normalized: bool = True,
                     method: str = "auto") -> np.ndarray:
    """Spectral clustering: bottom-``k`` Laplacian eigenvectors, rows scaled
    to unit length, then k-means."""
    if not 1 <= k <= g.n:
        raise ValueError(f"k must lie in [1, {g.n}], got {k}")
    if k == 1:
        return np.zeros(g.n, dtype=np.int64)
    emb = spectral_embed(g, k, normalized=normalized, method=method, seed=seed)
    V = emb.vectors
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    V = np.divide(V, norms, out=np.zeros_like(V), where=norms > 0)
    return kmeans(V, k, seed=seed)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Adjusted Rand index between two labelings of the same points."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("labelings must have the same length")
    n = a.size
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        x = np.asarray(x, dtype=np.float64)
        return float((x * (x - 1) / 2).sum())

    index = pairs(table)
    rows = pairs(table.sum(axis=1))
    cols = pairs(table.sum(axis=0))
    expected = rows * cols / (n * (n - 1) / 2)
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)
