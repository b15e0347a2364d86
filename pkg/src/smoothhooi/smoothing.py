"""Second-difference penalty construction.

The roughness penalty on a length-a time grid is ``lambda * ||D y||^2`` with D
a second-difference matrix. The periodic variant (default, suited to circular
24-hour grids) wraps around: 2 on the diagonal, -1 on the sub/super diagonals
and in the two corners. The open variant is the (a-2) x a stencil matrix with
rows (..., -1, 2, -1, ...) and no wraparound.

All factor updates work with A = I + lambda * D'D and its symmetric square
roots, which are computed once per lambda by a full symmetric
eigendecomposition and cached on the operator.
"""

from dataclasses import dataclass

import numpy as np


def second_difference_matrix(a: int, boundary: str = "periodic") -> np.ndarray:
    """Second-difference matrix on a uniform grid of length a (a >= 3)."""
    if a < 3:
        raise ValueError(f"grid length must be at least 3, got {a}")
    if boundary == "periodic":
        d = 2.0 * np.eye(a)
        off = np.arange(a - 1)
        d[off, off + 1] = -1.0
        d[off + 1, off] = -1.0
        d[0, a - 1] = -1.0
        d[a - 1, 0] = -1.0
        return d
    if boundary == "open":
        d = np.zeros((a - 2, a))
        rows = np.arange(a - 2)
        d[rows, rows] = -1.0
        d[rows, rows + 1] = 2.0
        d[rows, rows + 2] = -1.0
        return d
    raise ValueError(f"boundary must be 'periodic' or 'open', got {boundary!r}")


@dataclass(frozen=True)
class SmoothingOperator:
    """D, lambda, A = I + lambda*D'D, and cached symmetric square-root factors."""

    d: np.ndarray
    lam: float
    a_mat: np.ndarray
    a_sqrt: np.ndarray
    a_inv_sqrt: np.ndarray
    boundary: str

    @property
    def grid_length(self) -> int:
        return self.a_mat.shape[0]


def penalty_operator(d: np.ndarray, lam: float, boundary: str | None = None) -> SmoothingOperator:
    """Build the penalty operator A = I + lam*D'D with its square-root factors.

    The boundary label is inferred from the shape of d (square = periodic,
    (a-2) x a = open) unless given explicitly. Eigenvalues of A are >= 1
    analytically; values below 1 - 1e-12 are clamped to 1 before the inverse
    square root to guard against rounding.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    d = np.asarray(d, dtype=float)
    a = d.shape[1]
    if boundary is None:
        boundary = "periodic" if d.shape[0] == a else "open"
    if d.shape not in ((a, a), (a - 2, a)):
        raise ValueError(f"difference matrix shape {d.shape} is neither a x a nor (a-2) x a")

    eye = np.eye(a)
    if lam == 0:
        return SmoothingOperator(d, 0.0, eye, eye.copy(), eye.copy(), boundary)

    a_mat = eye + lam * (d.T @ d)
    a_mat = 0.5 * (a_mat + a_mat.T)
    w, q = np.linalg.eigh(a_mat)
    w = np.where(w < 1.0 - 1e-12, 1.0, w)
    a_sqrt = (q * np.sqrt(w)) @ q.T
    a_inv_sqrt = (q / np.sqrt(w)) @ q.T
    return SmoothingOperator(d, float(lam), a_mat, 0.5 * (a_sqrt + a_sqrt.T),
                             0.5 * (a_inv_sqrt + a_inv_sqrt.T), boundary)


def build_operator(a: int, lam: float, boundary: str = "periodic") -> SmoothingOperator:
    """Convenience: second-difference matrix and penalty operator in one call."""
    return penalty_operator(second_difference_matrix(a, boundary), lam, boundary)
