"""Undirected weighted graphs in compressed sparse row form."""

from __future__ import annotations

import os
from typing import Iterable, Tuple

import numpy as np
import scipy.sparse as sp


class SparseGraph:
    """Undirected graph with positive edge weights and no self-loops.

    The adjacency matrix is stored as a symmetric CSR matrix.  Build graphs
    with :func:`graph_from_edge_list` or :meth:`from_upper`, which guarantee
    exact symmetry.
    """

    def __init__(self, adjacency: sp.spmatrix | sp.sparray, *, check: bool = True):
        A = sp.csr_matrix(adjacency, dtype=np.float64)
        A.sort_indices()
        if check:
            if A.shape[0] != A.shape[1]:
                raise ValueError("adjacency matrix must be square")
            if A.nnz and A.data.min() <= 0:
                raise ValueError("edge weights must be positive")
            if A.diagonal().any():
                raise ValueError("self-loops are not allowed")
            if (A != A.T).nnz:
                raise ValueError("adjacency matrix must be symmetric")
        self.adjacency = A

    @classmethod
    def from_upper(cls, n: int, rows, cols, weights) -> "SparseGraph":
        """Graph from strictly upper-triangular entries ``rows < cols``,
        with duplicates already merged."""
        U = sp.csr_matrix((weights, (rows, cols)), shape=(n, n))
        return cls(U + U.T, check=False)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def number_of_edges(self) -> int:
        return self.adjacency.nnz // 2

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def degree(self, i: int) -> float:
        return degree(self, i)

    def laplacian(self, normalized: bool = False) -> sp.csr_matrix:
        return laplacian(self, normalized)

    def edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge arrays ``(i, j, w)`` with ``i < j``."""
        U = sp.triu(self.adjacency, k=1, format="coo")
        order = np.lexsort((U.col, U.row))
        return U.row[order], U.col[order], U.data[order]

    def save_edgelist(self, path: str | os.PathLike) -> None:
        """Write one ``i j w`` line per undirected edge."""
        rows, cols, weights = self.edges()
        with open(path, "w", newline="\n") as fh:
            for i, j, w in zip(rows, cols, weights):
                fh.write(f"{i} {j} {float(w)!r}\n")


def degree(g: SparseGraph, i: int) -> float:
    """Sum of the weights of edges incident to ``i``."""
    if not 0 <= i < g.n:
        raise IndexError(f"vertex {i} out of range for graph with {g.n} vertices")
    A = g.adjacency
    return float(A.data[A.indptr[i]:A.indptr[i + 1]].sum())


def _inv_sqrt_degrees(g: SparseGraph) -> np.ndarray:
    deg = g.degrees()
    out = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg), out=out, where=deg > 0)
    return out


def laplacian(g: SparseGraph, normalized: bool = False) -> sp.csr_matrix:
    """``D - A``, or ``I - D^-1/2 A D^-1/2`` when ``normalized``.

    In the normalized matrix a zero-degree vertex keeps the identity row.
    Both matrices are exactly symmetric.
    """
    A = g.adjacency.tocoo()
    n = g.n
    if normalized:
        s = _inv_sqrt_degrees(g)
        off = -A.data * (s[A.row] * s[A.col])
        diag = np.ones(n)
    else:
        off = -A.data
        diag = g.degrees()
    idx = np.arange(n)
    M = sp.csr_matrix(
        (np.concatenate([off, diag]),
         (np.concatenate([A.row, idx]), np.concatenate([A.col, idx]))),
        shape=(n, n))
    M.sort_indices()
    return M


def graph_from_edge_list(n: int, edges: Iterable[Tuple[int, int, float]]) -> SparseGraph:
    """Build a graph from ``(i, j, w)`` triples.

    Repeated pairs, in either orientation, are merged by summing their
    weights; self-loops are dropped.
    """
    if n < 0:
        raise ValueError("vertex count must be non-negative")
    triples = list(edges)
    if triples:
        arr = np.array(triples, dtype=np.float64).reshape(-1, 3)
        i = arr[:, 0]
        j = arr[:, 1]
        w = arr[:, 2]
    else:
        i = j = w = np.empty(0)
    if np.any(i != np.floor(i)) or np.any(j != np.floor(j)):
        raise ValueError("vertex indices must be integers")
    i = i.astype(np.int64)
    j = j.astype(np.int64)
    if np.any((i < 0) | (i >= n) | (j < 0) | (j >= n)):
        raise IndexError("edge endpoint out of range")
    if np.any(~(w > 0)):
        raise ValueError("edge weights must be positive")
    keep = i != j
    lo = np.minimum(i, j)[keep]
    hi = np.maximum(i, j)[keep]
    return SparseGraph.from_upper(n, lo, hi, w[keep])
