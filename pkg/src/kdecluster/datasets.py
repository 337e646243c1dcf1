"""Synthetic clustered datasets with ground-truth labels."""

from __future__ import annotations

import numpy as np


def make_blobs(n: int, d: int, k: int, noise: float = 1.0, seed=None, *,
               box: float = 10.0, min_separation: float | None = None):
    """Isotropic Gaussian clusters.

    Centres are uniform in ``[-box, box]^d`` and redrawn until every pair is
    at least ``min_separation`` apart (default ``8 * noise``); the box grows
    when that is hard to satisfy.  Point ``i`` belongs to cluster ``i % k``.

    Returns ``(X, labels)``.
    """
    if n < 1 or d < 1 or k < 1 or k > n:
        raise ValueError("need n >= k >= 1 and d >= 1")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    if min_separation is None:
        min_separation = 8.0 * noise
    centers = np.empty((k, d))
    for c in range(k):
        attempts = 0
        while True:
            cand = rng.uniform(-box, box, d)
            if c == 0 or np.min(np.linalg.norm(centers[:c] - cand, axis=1)) >= min_separation:
                centers[c] = cand
                break
            attempts += 1
            if attempts % 1000 == 0:
                box *= 1.1
    labels = np.arange(n) % k
    X = centers[labels] + noise * rng.standard_normal((n, d))
    return X, labels


def make_moons(n: int, noise: float = 0.05, seed=None, *, d: int = 2):
    """Two interleaving half circles in the first two coordinates.

    The outer moon gets ``n // 2`` points and the inner one the rest;
    Gaussian noise is added to every coordinate.  Returns ``(X, labels)``.
    """
    if n < 2 or d < 2:
        raise ValueError("need n >= 2 and d >= 2")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    X = np.zeros((n, d))
    X[:n_out, 0] = np.cos(t_out)
    X[:n_out, 1] = np.sin(t_out)
    X[n_out:, 0] = 1.0 - np.cos(t_in)
    X[n_out:, 1] = 0.5 - np.sin(t_in)
    X += noise * rng.standard_normal((n, d))
    labels = np.concatenate([np.zeros(n_out, dtype=np.int64),
                             np.ones(n_in, dtype=np.int64)])
    return X, labels
