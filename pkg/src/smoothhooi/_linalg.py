"""Small dense linear-algebra helpers shared across the package."""

import numpy as np


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Resolve the sign ambiguity of eigen/singular vectors in place-free form.

    Each column is flipped so that its largest-magnitude entry is positive;
    ties break toward the lowest index (np.argmax picks the first maximum).
    Zero columns are left untouched.
    """
    v = np.array(vectors, copy=True)
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    v[:, pivot < 0] *= -1.0
    return v


def top_eigenvectors(sym: np.ndarray, k: int, return_values: bool = False):
    """Top-k eigenvectors of a symmetric matrix, sign-fixed, eigenvalues decreasing."""
    if k > sym.shape[0]:
        raise ValueError(f"requested {k} eigenvectors from a {sym.shape[0]}-dim matrix")
    w, q = np.linalg.eigh(sym)
    order = np.argsort(w)[::-1][:k]
    vecs = fix_signs(q[:, order])
    if return_values:
        return vecs, w[order]
    return vecs


def orthonormal_range(mat: np.ndarray, k: int) -> np.ndarray:
    """Sign-fixed orthonormal basis (a x k) for the leading column space of mat.

    Columns are the left singular vectors ordered by decreasing singular value,
    i.e. the top-k eigenvectors of mat @ mat.T.
    """
    u, _, _ = np.linalg.svd(mat, full_matrices=False)
    if k > u.shape[1]:
        raise ValueError(f"rank {k} basis requested from a matrix with {u.shape[1]} columns")
    return fix_signs(u[:, :k])


def random_orthonormal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random orthonormal columns via QR of a Gaussian draw."""
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def relative_gaps(values: np.ndarray) -> np.ndarray:
    """Pairwise relative gaps |v_i - v_{i+1}| / max(|v_i|, tiny) of a 1-d array."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return np.empty(0)
    denom = np.maximum(np.abs(v[:-1]), 1e-300)
    return np.abs(np.diff(v)) / denom
