"""Preconditioning operators that turn a momentum matrix into an update direction.

Two real operators plus a pass-through: row-wise l2 normalization (the RMNP
operator, O(mn) per call), quintic Newton-Schulz orthogonalization (the Muon
operator, O(mn*min(m,n)) per call), and identity (the plain momentum-SGD
ablation). `exact_orthogonalize` is the SVD-based oracle the Newton-Schulz
approximation is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import matrix as mx

__all__ = [
    "DEFAULT_NS_COEFFS",
    "DEFAULT_RN_EPS",
    "NsCoefficients",
    "PreconditionerKind",
    "RankDeficiencyError",
    "apply_preconditioner",
    "exact_orthogonalize",
    "newton_schulz5",
    "rmnp_kronecker_preconditioner",
    "row_normalize",
]

DEFAULT_RN_EPS = 1e-8

# Guards the Frobenius normalization of the Newton-Schulz starting iterate.
_NS_NORM_GUARD = 1e-7


class PreconditionerKind(str, Enum):
    ROW_NORMALIZE = "rn"
    NEWTON_SCHULZ5 = "ns5"
    IDENTITY = "identity"


class RankDeficiencyError(ValueError):
    """Input is numerically rank-deficient, so its polar factor is undefined."""


@dataclass(frozen=True)
class NsCoefficients:
    """Coefficients of the quintic x -> a*x + b*x^3 + c*x^5 and iteration count."""

    a: float = 3.4445
    b: float = -4.7750
    c: float = 2.0315
    iterations: int = 5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


DEFAULT_NS_COEFFS = NsCoefficients()


def row_normalize(
    v: mx.Matrix, eps: float = DEFAULT_RN_EPS, out: mx.Matrix | None = None
) -> mx.Matrix:
    """Divide each row of *v* by its l2 norm; rows with norm <= eps become zero.

    When every row norm exceeds eps, the result has unit rows: its Frobenius
    norm is sqrt(m), its maximum row norm is 1, and its inner product with
    *v* equals the sum of v's row norms. ``out``, when given, receives the
    result without allocating a new matrix.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    norms = mx.row_norms(v)
    keep = norms > eps
    safe = np.where(keep, norms, 1.0)
    out = np.divide(v, safe[:, None], out=out)
    if not keep.all():
        out[~keep] = 0.0
    return out


def newton_schulz5(v: mx.Matrix, coeffs: NsCoefficients = DEFAULT_NS_COEFFS) -> mx.Matrix:
    """Approximate the orthogonal polar factor of *v* by a quintic matrix iteration.

    Starts from v scaled by its Frobenius norm, then runs
    ``x <- a*x + (b*g + c*g@g) @ x`` with ``g = x @ x.T`` for
    ``coeffs.iterations`` rounds. Tall inputs are transposed in and back out
    so the polynomial always operates on the smaller Gram side. A zero input
    yields a zero matrix.
    """
    m, n = v.shape
    x = np.asarray(v, dtype=np.float64)
    transposed = m > n
    if transposed:
        x = x.T
    x = x / (np.linalg.norm(x) + _NS_NORM_GUARD)
    for _ in range(coeffs.iterations):
        g = x @ x.T
        x = coeffs.a * x + (coeffs.b * g + coeffs.c * (g @ g)) @ x
    return x.T if transposed else x


def exact_orthogonalize(v: mx.Matrix, rel_tol: float = 1e-12) -> mx.Matrix:
    """Exact orthogonal polar factor of *v* via SVD.

    Raises RankDeficiencyError when any singular value falls at or below
    rel_tol times the largest one.
    """
    u, s, w = mx.svd(v)
    cutoff = rel_tol * s[0]
    if s[-1] <= cutoff:
        raise RankDeficiencyError(
            f"singular value {s[-1]:.6e} at or below {rel_tol:g} * max ({cutoff:.6e})"
        )
    return u @ w.T


def rmnp_kronecker_preconditioner(v: mx.Matrix) -> mx.Matrix:
    """The m x m diagonal scaling factor whose entries are v's row norms.

    Applying its inverse row-wise to *v* reproduces ``row_normalize(v, 0)``
    whenever no row of *v* is zero.
    """
    return np.diag(mx.row_norms(v))


def apply_preconditioner(
    kind: PreconditionerKind | str,
    v: mx.Matrix,
    *,
    ns_coeffs: NsCoefficients = DEFAULT_NS_COEFFS,
    rn_eps: float = DEFAULT_RN_EPS,
) -> mx.Matrix:
    """Dispatch on *kind*; identity returns *v* itself without copying."""
    kind = PreconditionerKind(kind)
    if kind is PreconditionerKind.ROW_NORMALIZE:
        return row_normalize(v, rn_eps)
    if kind is PreconditionerKind.NEWTON_SCHULZ5:
        return newton_schulz5(v, ns_coeffs)
    return v
