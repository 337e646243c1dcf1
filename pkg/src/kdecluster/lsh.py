"""Euclidean locality-sensitive hashing.

A single hash function projects onto a Gaussian direction ``a``, shifts by
``b ~ U[0, 4)`` and buckets with width 4::

    h(x) = floor((<x, a> + b) / 4)

``E2LSHTable`` concatenates ``K`` such functions per table and keeps ``L``
independent tables; a stored point is a near-neighbour candidate of a
query when the two agree on all ``K`` values in at least one table.

Random streams: every table draws from a single ``numpy.random.Generator``
seeded with ``seed``.  All ``L*K`` direction vectors are drawn first, in
table-major order (function ``j`` of table ``l`` is row ``l*K + j``), then
the ``L*K`` offsets in the same order.  Each value comes from a distinct
segment of one PCG64 stream, so the functions are independent.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .data import DataPoint, as_matrix, as_point

BUCKET_WIDTH = 4.0

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_INT32_MAX = np.iinfo(np.int32).max


def collision_probability(c):
    """Probability that one random hash function maps two points at
    distance ``c`` to the same bucket.

    Accepts a scalar or an array of non-negative distances.  ``p(0) = 1``.
    """
    c_arr = np.asarray(c, dtype=np.float64)
    if np.any(c_arr < 0) or np.any(np.isnan(c_arr)):
        raise ValueError("distance must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_sq = 8.0 / (c_arr * c_arr)
        p = (-c_arr / (2.0 * _SQRT_2PI) * -np.expm1(-inv_sq)
             + erf(2.0 * math.sqrt(2.0) / c_arr))
    p = np.where(c_arr == 0.0, 1.0, p)
    p = np.clip(p, 0.0, 1.0)
    if np.ndim(c) == 0:
        return float(p)
    return p


def boosted_collision_probability(c, K: int, L: int):
    """Probability ``1 - (1 - p(c)^K)^L`` that two points at distance ``c``
    share a bucket in at least one of ``L`` tables of ``K`` functions."""
    if K < 1 or L < 1:
        raise ValueError(f"K and L must be positive, got K={K}, L={L}")
    p = np.asarray(collision_probability(c), dtype=np.float64)
    # 1 - (1 - x)^L computed as -expm1(L * log1p(-x)) keeps precision when
    # p^K is tiny.
    pk = p ** K
    with np.errstate(divide="ignore"):
        out = -np.expm1(L * np.log1p(-pk))
    out = np.where(pk >= 1.0, 1.0, out)
    if np.ndim(c) == 0:
        return float(out)
    return out


class LSHFunction:
    """One Euclidean hash function ``floor((<x, a> + b) / 4)``."""

    def __init__(self, dimension: int, seed=None, *, a=None, b=None):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        rng = np.random.default_rng(seed)
        self.a = (rng.standard_normal(dimension) if a is None
                  else np.asarray(a, dtype=np.float64))
        self.b = float(rng.uniform(0.0, BUCKET_WIDTH) if b is None else b)
        if self.a.shape != (dimension,):
            raise ValueError("projection vector has the wrong dimension")
        if not 0.0 <= self.b < BUCKET_WIDTH:
            raise ValueError("offset b must lie in [0, 4)")

    @property
    def dimension(self) -> int:
        return self.a.shape[0]

    def apply(self, x: DataPoint) -> int:
        x = as_point(x)
        if x.shape[0] != self.dimension:
            raise ValueError(
                f"point has dimension {x.shape[0]}, expected {self.dimension}")
        return math.floor((float(np.dot(x, self.a)) + self.b) / BUCKET_WIDTH)

    collision_probability = staticmethod(collision_probability)


def _key_multipliers(K: int) -> np.ndarray:
    # Fixed odd multipliers for folding a K-tuple into one 64-bit key.  The
    # folded key only narrows the search; the full tuple is always compared.
    rng = np.random.default_rng(0x9E3779B97F4A7C15)
    return rng.integers(1, 2**63, size=K, dtype=np.int64).view(np.uint64) | 1


_TABLE_BITS = 16
MAX_TABLES = 2**_TABLE_BITS - 1


def _fold(keys: np.ndarray, mult: np.ndarray) -> np.ndarray:
    """Fold ``(m, L, K)`` bucket keys into ``(m, L)`` search keys whose top
    bits hold the table number, so all tables share one sorted array."""
    folded = np.bitwise_xor.reduce(keys.astype(np.int64).view(np.uint64) * mult,
                                   axis=-1)
    tables = np.arange(keys.shape[1], dtype=np.uint64) << np.uint64(64 - _TABLE_BITS)
    return (folded >> np.uint64(_TABLE_BITS)) | tables


class E2LSHTable:
    """Boosted Euclidean LSH table over a fixed set of points.

    Parameters
    ----------
    K : int
        Hash functions concatenated per table.
    L : int
        Number of independent tables.
    points : sequence of points or (n, d) array
        The stored points.  Queries return indices into this sequence.
    seed : int, SeedSequence or Generator, optional
    """

    def __init__(self, K: int, L: int, points, seed=None):
        if K < 1 or L < 1:
            raise ValueError(f"K and L must be positive, got K={K}, L={L}")
        if L > MAX_TABLES:
            raise ValueError(f"at most {MAX_TABLES} tables are supported")
        self.K = int(K)
        self.L = int(L)
        self.points = self._stack(points)
        self.dimension = self.points.shape[1] if self.points.ndim == 2 else None

        self._mult = _key_multipliers(self.K)
        if self.dimension is None:
            self._projections = np.empty((self.L * self.K, 0))
            self._offsets = np.empty(self.L * self.K)
            return

        rng = np.random.default_rng(seed)
        self._projections = rng.standard_normal((self.L * self.K, self.dimension))
        self._offsets = rng.uniform(0.0, BUCKET_WIDTH, self.L * self.K)

        n = self.points.shape[0]
        keys = self._hash(self.points)  # (n, L, K)
        # Flat layout: entry t*n + i is point i in table t.
        flat = _fold(keys, self._mult).T.ravel()
        order = np.argsort(flat, kind="stable")
        self._sorted_folds = flat[order]
        self._sorted_points = (order % max(n, 1)).astype(np.intp)
        self._sorted_keys = np.ascontiguousarray(
            keys.transpose(1, 0, 2).reshape(self.L * n, self.K)[order])

    @staticmethod
    def _stack(points) -> np.ndarray:
        if isinstance(points, np.ndarray):
            if points.ndim != 2:
                raise ValueError("point array must be 2-d")
            return as_matrix(points)
        points = list(points)
        if not points:
            return np.empty((0,))
        dims = {np.shape(p) for p in points}
        if len(dims) != 1:
            raise ValueError(f"points have mixed dimensions: {sorted(dims)}")
        return np.vstack([as_point(p) for p in points])

    def __len__(self) -> int:
        return self.points.shape[0]

    def _hash(self, X: np.ndarray) -> np.ndarray:
        # einsum keeps each row's projection independent of the batch size,
        # so single and batched queries see identical bucket keys.
        proj = np.einsum("ij,kj->ik", X, self._projections)
        vals = np.floor((proj + self._offsets) / BUCKET_WIDTH)
        if vals.size and np.abs(vals).max() > _INT32_MAX:
            raise OverflowError("bucket id exceeds 32-bit range")
        return vals.astype(np.int32).reshape(X.shape[0], self.L, self.K)

    def function(self, table: int, j: int) -> LSHFunction:
        """The ``j``-th hash function of ``table``."""
        row = table * self.K + j
        return LSHFunction(self.dimension, a=self._projections[row],
                           b=self._offsets[row])

    def bucket_keys(self, q: DataPoint) -> list[tuple[int, ...]]:
        """The ``L`` bucket keys (K-tuples) of ``q``, one per table."""
        q = self._check_query(as_point(q)[None, :])
        return [tuple(int(v) for v in row) for row in self._hash(q)[0]]

    def _check_query(self, Q: np.ndarray) -> np.ndarray:
        if self.dimension is not None and Q.shape[1] != self.dimension:
            raise ValueError(
                f"query has dimension {Q.shape[1]}, expected {self.dimension}")
        return Q

    def query_batch(self, Q) -> tuple[np.ndarray, np.ndarray]:
        """Near-neighbour candidates for every row of ``Q``.

        Returns ``(query_ids, point_ids)``, the distinct colliding pairs
        sorted by query then point index.
        """
        Q = self._check_query(as_matrix(Q))
        empty = (np.empty(0, np.intp), np.empty(0, np.intp))
        n = len(self)
        m = Q.shape[0]
        if n == 0 or m == 0:
            return empty
        qkeys = self._hash(Q)
        folds = _fold(qkeys, self._mult).ravel()  # entry r*L + t
        lo = np.searchsorted(self._sorted_folds, folds, side="left")
        hi = np.searchsorted(self._sorted_folds, folds, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            return empty
        row = np.repeat(np.arange(m * self.L), counts)
        pos = np.arange(total) + np.repeat(lo - (np.cumsum(counts) - counts), counts)
        same = (self._sorted_keys[pos] == qkeys.reshape(m * self.L, self.K)[row]).all(axis=1)
        codes = (row[same] // self.L).astype(np.int64) * n + self._sorted_points[pos[same]]
        codes = np.unique(codes)
        return (codes // n).astype(np.intp), (codes % n).astype(np.intp)

    def get_near_neighbours(self, q: DataPoint) -> np.ndarray:
        """Indices of stored points sharing a bucket with ``q`` in any table,
        ascending and without repeats."""
        return self.query_batch(as_point(q)[None, :])[1]

    get_near_neighbors = get_near_neighbours

    def collision_probability(self, c):
        return boosted_collision_probability(c, self.K, self.L)
