"""Euclidean LSH, Gaussian kernel density estimation and KDE-based
spectral clustering."""

__version__ = "0.1.0"

from .cluster import (ConvergenceError, KMeansResult, SpectralEmbedding,
                      adjusted_rand_index, approximate_similarity_graph, kmeans,
                      lloyd_kmeans, sample_neighbor, similarity_graph,
                      spectral_cluster, spectral_embed)
from .data import (DataPoint, DenseMatrix, MatrixFormatError, load_matrix,
                   matrix_to_datapoints, row_view, save_matrix)
from .datasets import make_blobs, make_moons
from .graph import SparseGraph, degree, graph_from_edge_list, laplacian
from .kde import CKNSEstimator, ExactKDE, KernelConfig, gaussian_kernel, kernel_eval
from .lsh import (E2LSHTable, LSHFunction, boosted_collision_probability,
                  collision_probability)

__all__ = [
    "CKNSEstimator", "ConvergenceError", "DataPoint", "DenseMatrix", "E2LSHTable",
    "ExactKDE", "KMeansResult", "KernelConfig", "LSHFunction", "MatrixFormatError",
    "SparseGraph", "SpectralEmbedding", "adjusted_rand_index",
    "approximate_similarity_graph", "boosted_collision_probability",
    "collision_probability", "degree", "gaussian_kernel", "graph_from_edge_list",
    "kernel_eval", "kmeans", "laplacian", "lloyd_kmeans", "load_matrix",
    "make_blobs", "make_moons", "matrix_to_datapoints", "row_view",
    "sample_neighbor", "save_matrix", "similarity_graph", "spectral_cluster",
    "spectral_embed",
]
