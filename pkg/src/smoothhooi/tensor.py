"""Masked dense 3-way tensor container and the unfolding/mode-product primitives.

Conventions used throughout the package:

* tensors are ``(a, b, n)`` arrays: time points x measures x subjects;
* frontal slice ``i`` is the ``(a, b)`` matrix ``values[:, :, i]``;
* modes are 1-indexed (mode k in {1, 2, 3}) to match the unfolding notation
  ``X_(k)``;
* unfoldings order the mode-k fibers with lower-numbered remaining modes
  varying fastest (the Kolda-Bader convention), so ``unfold(x, 1)`` of an
  ``(a, b, n)`` tensor has columns ``(b0,n0), (b1,n0), ..., (b0,n1), ...``.

Storage is Fortran-ordered (time index fastest) so frontal slices are
contiguous blocks. Entries where the mask is false are semantically undefined:
every consumer must go through the mask, and the stored placeholder (0 by
default) never enters a norm or fit.
"""

from dataclasses import dataclass

import numpy as np


def _as_readonly(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.asfortranarray(arr, dtype=dtype).copy(order="F")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MaskedTensor:
    """Dense 3-way array with an observation mask of identical shape."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 3:
            raise ValueError(f"expected a 3-way array, got ndim={values.ndim}")
        if values.shape != mask.shape:
            raise ValueError(f"values shape {values.shape} != mask shape {mask.shape}")
        object.__setattr__(self, "values", _as_readonly(values, float))
        object.__setattr__(self, "mask", _as_readonly(mask, bool))

    @classmethod
    def fully_observed(cls, values: np.ndarray) -> "MaskedTensor":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def frontal_slice(self, i: int) -> "FrontalSlice":
        a, b, n = self.dims
        if not 0 <= i < n:
            raise IndexError(f"subject index {i} out of range [0, {n})")
        return FrontalSlice(self.values[:, :, i], self.mask[:, :, i], i)

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Dense copy with unobserved entries replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)


@dataclass(frozen=True)
class FrontalSlice:
    """One subject's (a, b) matrix together with its observation mask."""

    matrix: np.ndarray
    slice_mask: np.ndarray
    subject_index: int

    def __post_init__(self):
        if self.matrix.shape != self.slice_mask.shape:
            raise ValueError("matrix and slice_mask shapes differ")


def unfold(x: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k unfolding of a 3-way array (k in {1, 2, 3}), Kolda-Bader ordering."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-way array, got ndim={x.ndim}")
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    return np.reshape(np.moveaxis(x, mode - 1, 0), (x.shape[mode - 1], -1), order="F")


def fold(m: np.ndarray, mode: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`: fold a matrix back into the given 3-way shape."""
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    rest = tuple(s for k, s in enumerate(shape, start=1) if k != mode)
    stacked = np.reshape(np.asarray(m), (m.shape[0],) + rest, order="F")
    return np.moveaxis(stacked, 0, mode - 1)


def mode_product(x: np.ndarray, u: np.ndarray, mode: int) -> np.ndarray:
    """k-mode product: contract u (j x I_k) against mode k of x."""
    x = np.asarray(x)
    u = np.asarray(u)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-way array, got ndim={x.ndim}")
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if u.ndim != 2 or u.shape[1] != x.shape[mode - 1]:
        raise ValueError(
            f"matrix shape {u.shape} does not contract mode {mode} of tensor shape {x.shape}"
        )
    return np.moveaxis(np.tensordot(u, x, axes=(1, mode - 1)), 0, mode - 1)


def restricted_norm_sq(m: np.ndarray, omega: np.ndarray) -> float:
    """Squared Frobenius norm of m restricted to the entries where omega is true."""
    m = np.asarray(m)
    omega = np.asarray(omega, dtype=bool)
    if m.shape != omega.shape:
        raise ValueError(f"matrix shape {m.shape} != mask shape {omega.shape}")
    kept = np.where(omega, m, 0.0)
    return float(np.sum(kept * kept))
