"""Dense float64 matrix core: validation, norms, products, and an SVD oracle."""

from __future__ import annotations

from enum import Enum

import numpy as np

__all__ = [
    "DimensionError",
    "Matrix",
    "NormKind",
    "as_matrix",
    "frobenius_norm",
    "gram",
    "inf_two_norm",
    "inner",
    "norm",
    "one_two_norm",
    "row_norms",
    "svd",
]

# A Matrix is a 2-D, C-contiguous float64 ndarray with finite entries.
Matrix = np.ndarray


class NormKind(str, Enum):
    """Supported matrix norms. Nuclear/spectral norms are deliberately absent."""

    FROBENIUS = "frobenius"
    ONE_TWO = "one-two"
    INF_TWO = "inf-two"


class DimensionError(ValueError):
    """Operand shapes do not line up."""


def as_matrix(data) -> Matrix:
    """Validate *data* as a matrix: 2-D, positive dims, finite float64 entries."""
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"matrix dimensions must be positive, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    return a


def row_norms(a: Matrix) -> np.ndarray:
    """Vector of per-row l2 norms."""
    return np.sqrt(np.einsum("ij,ij->i", a, a))


def frobenius_norm(a: Matrix) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.sqrt(np.einsum("ij,ij->", a, a)))


def one_two_norm(a: Matrix) -> float:
    """Sum of per-row l2 norms. Always >= the Frobenius norm."""
    return float(row_norms(a).sum())


def inf_two_norm(a: Matrix) -> float:
    """Maximum per-row l2 norm. Dual partner of the (1,2) norm."""
    return float(row_norms(a).max())


def norm(a: Matrix, kind: NormKind | str) -> float:
    """Dispatch to the named norm."""
    kind = NormKind(kind)
    if kind is NormKind.FROBENIUS:
        return frobenius_norm(a)
    if kind is NormKind.ONE_TWO:
        return one_two_norm(a)
    return inf_two_norm(a)


def inner(a: Matrix, b: Matrix) -> float:
    """Entrywise inner product, equal to trace(a^T b)."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.einsum("ij,ij->", a, b))


def gram(a: Matrix) -> Matrix:
    """The m x m product a a^T: symmetric PSD, diagonal holds squared row norms."""
    return a @ a.T


def svd(a: Matrix) -> tuple[Matrix, np.ndarray, Matrix]:
    """Thin SVD (u, s, v) with a = u @ diag(s) @ v.T and s nonincreasing.

    Raises numpy.linalg.LinAlgError if the underlying iteration fails to
    converge. Oracle only; never on the optimizer hot path.
    """
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return u, s, vh.T
