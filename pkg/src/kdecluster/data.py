"""Dense dataset matrices and their text file format.

A dataset is an ``(n, d)`` float64 numpy array in C (row-major) order, one
point per row. A single point is a 1-d view of a row, so writes through the
matrix are visible through previously taken points.
"""

from __future__ import annotations

import math
import os
import re
from typing import List

import numpy as np

DenseMatrix = np.ndarray
DataPoint = np.ndarray

_SEPARATORS = re.compile(r"[\s,]+")


class MatrixFormatError(ValueError):
    """Raised when a matrix file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def as_matrix(data) -> DenseMatrix:
    """Coerce array-like input to a 2-d float64 C-ordered matrix."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def as_point(x) -> DataPoint:
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"expected a 1-d point, got shape {p.shape}")
    return p


def load_matrix(path: str | os.PathLike) -> DenseMatrix:
    """Read a space- or comma-separated file with one data point per line.

    Any run of spaces, tabs and commas separates fields. Trailing blank
    lines are ignored; every other line must hold the same number of finite
    decimal numbers.
    """
    with open(path, "r", newline=None) as fh:
        lines = fh.read().split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MatrixFormatError("file contains no rows; cannot infer dimension")

    rows: List[List[float]] = []
    width = None
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip().strip(",")
        if not text:
            raise MatrixFormatError("empty row", lineno)
        fields = _SEPARATORS.split(text)
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise MatrixFormatError(
                f"expected {width} fields, found {len(fields)}", lineno)
        row = []
        for field in fields:
            try:
                value = float(field)
            except ValueError:
                raise MatrixFormatError(
                    f"non-numeric field {field!r}", lineno) from None
            if not math.isfinite(value):
                raise MatrixFormatError(f"non-finite value {field!r}", lineno)
            row.append(value)
        rows.append(row)
    return np.array(rows, dtype=np.float64)


def save_matrix(m: DenseMatrix, path: str | os.PathLike) -> None:
    """Write ``m`` as comma-separated text that reloads bit-for-bit.

    Values use Python's shortest round-trip float repr.
    """
    m = as_matrix(m)
    with open(path, "w", newline="\n") as fh:
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def row_view(m: DenseMatrix, i: int) -> DataPoint:
    """Non-copying view of row ``i`` of ``m``."""
    n = m.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"row {i} out of range for matrix with {n} rows")
    return m[i]


def matrix_to_datapoints(m: DenseMatrix) -> List[DataPoint]:
    return [m[i] for i in range(m.shape[0])]
