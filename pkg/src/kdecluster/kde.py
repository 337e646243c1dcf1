"""Kernel functions and kernel density estimation.

``ExactKDE`` evaluates the mean kernel value against every data point.
``CKNSEstimator`` estimates the Gaussian kernel density by importance
sampling: the dataset is subsampled at geometric rates, each subsample is
indexed with Euclidean LSH tuned to one band of kernel values, and the
points recovered for a query are reweighted by the inverse of their
sampling rate and of their LSH recovery probability.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import List

import numpy as np

from .data import DataPoint, DenseMatrix, as_matrix, as_point
from ._rng import seed_sequence
from .lsh import E2LSHTable, boosted_collision_probability, collision_probability

LN2 = math.log(2.0)

KERNEL_FAMILIES = ("gaussian", "exponential", "logistic")


@dataclass(frozen=True)
class KernelConfig:
    """A radial kernel ``k(c)`` with values in ``[0, 1]``.

    ``bandwidth`` is the scale ``a`` of the Gaussian ``exp(-a c^2)`` and
    exponential ``exp(-a |c|)`` kernels; the logistic kernel
    ``4 / (2 + e^c + e^-c)`` ignores it.
    """

    family: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family != "logistic" and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def __call__(self, c):
        return kernel_eval(self, c)


def kernel_eval(cfg: KernelConfig, c):
    """Kernel value at distance ``c`` (scalar or array)."""
    c = np.asarray(c, dtype=np.float64)
    if cfg.family == "gaussian":
        out = np.exp(-cfg.bandwidth * c * c)
    elif cfg.family == "exponential":
        out = np.exp(-cfg.bandwidth * np.abs(c))
    else:
        # 4 / (2 + e^c + e^-c) == 4e / (1 + e)^2 with e = e^-|c| <= 1.
        e = np.exp(-np.abs(c))
        out = 4.0 * e / (1.0 + e) ** 2
    return float(out) if out.ndim == 0 else out


def gaussian_kernel(a: float, x: DataPoint, y: DataPoint) -> float:
    """``exp(-a ||x - y||^2)``."""
    x = as_point(x)
    y = as_point(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    return math.exp(-a * float(np.dot(diff, diff)))


def _pair_sq_dists(Q: np.ndarray, X: np.ndarray, qi: np.ndarray,
                   xi: np.ndarray) -> np.ndarray:
    diff = Q[qi] - X[xi]
    return np.einsum("ij,ij->i", diff, diff)


class _Counter:
    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        with self._lock:
            self._value += int(k)

    @property
    def value(self) -> int:
        return self._value


class ExactKDE:
    """Exact Gaussian kernel density, ``(1/n) sum_i exp(-a ||q - x_i||^2)``.

    Each query costs ``n`` kernel evaluations.
    """

    def __init__(self, data, a: float, *, chunk_size: int = 256):
        if not a > 0:
            raise ValueError("bandwidth a must be positive")
        self.data = as_matrix(data)
        self.config = KernelConfig("gaussian", float(a))
        self.chunk_size = chunk_size
        self._counter = _Counter()

    @property
    def kernel_eval_count(self) -> int:
        return self._counter.value

    def query(self, q: DataPoint) -> float:
        return float(self.query_batch(as_point(q)[None, :])[0])

    def query_batch(self, Q) -> np.ndarray:
        Q = as_matrix(Q)
        n, d = self.data.shape
        if n == 0:
            raise ValueError("cannot query an empty dataset")
        if Q.shape[1] != d:
            raise ValueError(f"queries have dimension {Q.shape[1]}, expected {d}")
        a = self.config.bandwidth
        out = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], self.chunk_size):
            block = Q[s:s + self.chunk_size]
            diff = block[:, None, :] - self.data[None, :, :]
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            out[s:s + len(block)] = np.exp(-a * sq).sum(axis=1) / n
        self._counter.add(Q.shape[0] * n)
        return out


@dataclass(frozen=True)
class LevelParams:
    """LSH configuration of one sampling level."""

    level: int
    rate: float  # Bernoulli sampling probability
    radius: float  # outer distance of the level's kernel band
    scale: float  # points are multiplied by this before hashing
    K: int
    L: int


@dataclass
class _Level:
    params: LevelParams
    indices: np.ndarray  # dataset rows kept in this level's sample
    table: E2LSHTable


def default_k1(n: int, eps: float) -> int:
    return int(min(64, max(1, math.ceil(eps ** -2 * math.log2(max(n, 2))))))


class CKNSEstimator:
    """Approximate Gaussian KDE by LSH-based importance sampling.

    Parameters
    ----------
    data : (n, d) array
    a : float
        Gaussian bandwidth, ``k(c) = exp(-a c^2)``.
    eps : float
        Target relative accuracy; only used to derive the default ``K1``.
    min_mu : float, optional
        Smallest query density the structure resolves.  Defaults to ``1/n``.
    K1 : int, optional
        Independent copies averaged per query.  Defaults to
        ``ceil(eps^-2 log2 n)`` capped at 64.
    K2_constant : float
        Recall multiplier of the hash tables: each level uses
        ``L = ceil(K2_constant * p(r)^-K)`` tables, so a point on the
        level's outer radius ``r`` is missed with probability about
        ``exp(-K2_constant)``.
    p_offset : int
        Extra subsampling exponent; level ``i`` keeps each point with
        probability ``2^-(i + p_offset)``.
    seed : optional
        Seed for all sampling and hashing randomness.
    max_tables : int
        Cap on ``L`` per level.
    hash_radius : float
        Distance, in hashing units, that a level's outer radius is scaled to.
    """

    def __init__(self, data, a: float, eps: float = 0.5, min_mu: float | None = None,
                 K1: int | None = None, K2_constant: float = 5.0, p_offset: int = 0,
                 seed=None, *, max_tables: int = 128, hash_radius: float = 1.0,
                 chunk_size: int = 512):
        self.data = as_matrix(data)
        n = self.data.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one point")
        if not a > 0:
            raise ValueError("bandwidth a must be positive")
        if not 0 < eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if min_mu is None:
            min_mu = 1.0 / n
        if not 0 < min_mu <= 1:
            raise ValueError("min_mu must lie in (0, 1]")
        if K1 is None:
            K1 = default_k1(n, eps)
        if K1 < 1:
            raise ValueError("K1 must be at least 1")
        if not K2_constant > 0:
            raise ValueError("K2_constant must be positive")
        if p_offset < 0 or int(p_offset) != p_offset:
            raise ValueError("p_offset must be a non-negative integer")
        if max_tables < 1 or not hash_radius > 0:
            raise ValueError("max_tables and hash_radius must be positive")

        self.config = KernelConfig("gaussian", float(a))
        self.a = float(a)
        self.eps = float(eps)
        self.min_mu = float(min_mu)
        self.K1 = int(K1)
        self.K2_constant = float(K2_constant)
        self.p_offset = int(p_offset)
        self.max_tables = int(max_tables)
        self.hash_radius = float(hash_radius)
        self.chunk_size = chunk_size
        # Levels 0..top; level i serves kernel values in (2^-(i+1), 2^-i] and
        # the top level also takes everything below.
        self.top_level = max(0, math.ceil(math.log2(1.0 / self.min_mu) - 1e-12))
        self._counter = _Counter()

        root = seed_sequence(seed)
        self.copies: List[List[_Level]] = [
            self._build_copy(child) for child in root.spawn(self.K1)]

    @property
    def num_levels(self) -> int:
        return self.top_level + 1

    @property
    def kernel_eval_count(self) -> int:
        return self._counter.value

    def level_params(self, level: int, n_level: int) -> LevelParams:
        """Sampling rate and LSH parameters for ``level`` holding ``n_level``
        points."""
        rate = min(1.0, 2.0 ** -(level + self.p_offset))
        radius = math.sqrt((level + 1) * LN2 / self.a)
        scale = self.hash_radius / radius
        p_near = collision_probability(self.hash_radius)
        p_far = collision_probability(2.0 * self.hash_radius)
        K = max(1, math.ceil(math.log(max(n_level, 2)) / math.log(1.0 / p_far)))
        L = min(self.max_tables, math.ceil(self.K2_constant * p_near ** -K))
        return LevelParams(level, rate, radius, scale, K, L)

    def _build_copy(self, ss: np.random.SeedSequence) -> List[_Level]:
        n = self.data.shape[0]
        levels = []
        for level, child in enumerate(ss.spawn(self.num_levels)):
            sample_ss, hash_ss = child.spawn(2)
            rate = min(1.0, 2.0 ** -(level + self.p_offset))
            if rate >= 1.0:
                keep = np.arange(n)
            else:
                keep = np.flatnonzero(np.random.default_rng(sample_ss).random(n) < rate)
            params = self.level_params(level, len(keep))
            table = E2LSHTable(params.K, params.L, self.data[keep] * params.scale,
                               seed=hash_ss)
            levels.append(_Level(params, keep, table))
        return levels

    def _level_contributions(self, lvl: _Level, Q: np.ndarray):
        """Recovered (query, point, weighted kernel) triples of one level."""
        p = lvl.params
        qi, local = lvl.table.query_batch(Q * p.scale)
        self._counter.add(len(qi))
        xi = lvl.indices[local]
        sq = _pair_sq_dists(Q, self.data, qi, xi)
        band = np.floor(self.a * sq / LN2)
        keep = band >= p.level if p.level == self.top_level else band == p.level
        qi, xi, sq = qi[keep], xi[keep], sq[keep]
        recall = boosted_collision_probability(np.sqrt(sq) * p.scale, p.K, p.L)
        kernel = np.exp(-self.a * sq)
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(recall > 0, kernel / (p.rate * recall), 0.0)
        return qi, xi, weight

    def _contributions(self, Q: np.ndarray):
        """Per-copy, per-level contribution triples for a block of queries."""
        for copy in self.copies:
            for lvl in copy:
                yield self._level_contributions(lvl, Q)

    def _check(self, Q) -> np.ndarray:
        Q = as_matrix(Q)
        if Q.shape[1] != self.data.shape[1]:
            raise ValueError(
                f"queries have dimension {Q.shape[1]}, expected {self.data.shape[1]}")
        return Q

    def query_batch(self, Q) -> np.ndarray:
        """Density estimates for every row of ``Q``, in order."""
        Q = self._check(Q)
        m = Q.shape[0]
        out = np.empty(m)
        n = self.data.shape[0]
        for s in range(0, m, self.chunk_size):
            block = Q[s:s + self.chunk_size]
            total = np.zeros(len(block))
            for copy in self.copies:
                per_copy = np.zeros(len(block))
                for lvl in copy:
                    qi, _, w = self._level_contributions(lvl, block)
                    per_copy += np.bincount(qi, weights=w, minlength=len(block))
                total += per_copy
            out[s:s + len(block)] = np.maximum(total / (self.K1 * n), 0.0)
        return out

    def query(self, q: DataPoint) -> float:
        return float(self.query_batch(as_point(q)[None, :])[0])
