"""Smoothness-penalized low-rank fitting of masked 3-way tensors.

The model approximates each frontal slice as ``M_i ~ L G_i R'`` with shared
orthonormal factors L (a x r1, temporal) and R (b x r2, measures) and
per-subject cores G_i (r1 x r2), minimizing

    sum_i { ||M_i - L G_i R'||^2_{Omega_i}  +  lambda ||D L G_i R'||^2_F }

i.e. squared error on observed entries plus a curvature penalty on the full
reconstruction. Complete-data fits alternate closed-form eigenvector updates
(block coordinate ascent on an equivalent trace maximization); missing data
are handled by an outer imputation loop around the complete-data solver.

``fit_penalized_components`` implements the alternative that penalizes the
temporal factor itself (``lambda ||D L||^2``). It exists to demonstrate the
failure mode where orthogonality plus component smoothing drags L onto the
sinusoidal eigenbasis of D'D; it is not the recommended estimator.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._linalg import fix_signs, orthonormal_range, random_orthonormal
from .smoothing import SmoothingOperator
from .tensor import MaskedTensor

_EIGENGAP_RTOL = 1e-10


class UnidentifiableFiberError(ValueError):
    """A whole time row or measure column has no observations anywhere."""


@dataclass
class FitOptions:
    """Knobs for the fitting routines.

    ``initial_values`` optionally seeds the missing entries from a full array
    (warm starts reuse a previous solution's imputed tensor); observed entries
    of the input always win. ``variant`` selects the estimator: "smooth-fit"
    penalizes the reconstruction (the default), "penalize-components"
    penalizes L directly, and "none" is the unpenalized decomposition
    (requires lambda == 0).
    """

    lam: float
    ranks: tuple[int, int]
    max_inner_iterations: int = 200
    max_outer_iterations: int = 100
    inner_tolerance: float = 1e-6
    outer_tolerance: float = 1e-4
    initial_l: np.ndarray | None = None
    initial_fill: float = 0.0
    initial_values: np.ndarray | None = None
    variant: str = "smooth-fit"

    def validate(self, dims: tuple[int, int, int]) -> None:
        a, b, _ = dims
        r1, r2 = self.ranks
        if not (1 <= r1 <= a and 1 <= r2 <= b):
            raise ValueError(f"ranks {self.ranks} invalid for dims {dims}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.inner_tolerance <= 0 or self.outer_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_inner_iterations < 1 or self.max_outer_iterations < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.variant not in ("smooth-fit", "penalize-components", "none"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "none" and self.lam != 0:
            raise ValueError("variant 'none' requires lambda == 0")
        if self.initial_l is not None and self.initial_l.shape != (a, r1):
            raise ValueError(
                f"initial_l shape {self.initial_l.shape} != ({a}, {r1})"
            )
        if not np.isfinite(self.initial_fill):
            raise ValueError("initial_fill must be finite")


@dataclass(frozen=True)
class Decomposition:
    """Fitted factors, per-subject cores, and fit metadata."""

    l_factor: np.ndarray          # (a, r1), orthonormal columns
    r_factor: np.ndarray          # (b, r2), orthonormal columns
    cores: np.ndarray             # (n, r1, r2)
    lam: float
    ranks: tuple[int, int]
    objective_trace: np.ndarray   # one value per inner iteration, non-increasing
    converged: bool
    iterations: tuple[int, int]   # (outer, total inner)
    diagnostics: tuple[str, ...] = ()
    imputed: np.ndarray | None = None

    def __post_init__(self):
        r1, r2 = self.ranks
        for name, f, r in (("l_factor", self.l_factor, r1), ("r_factor", self.r_factor, r2)):
            if f.shape[1] != r:
                raise ValueError(f"{name} has {f.shape[1]} columns, expected {r}")
            gram_err = np.linalg.norm(f.T @ f - np.eye(r))
            if gram_err > 1e-8:
                raise ValueError(f"{name} columns not orthonormal (deviation {gram_err:.2e})")
        if self.max_trace_increase > 1e-10:
            raise ValueError(
                f"objective trace increases by {self.max_trace_increase:.2e} relative"
            )

    def reconstruct(self) -> np.ndarray:
        """Dense (a, b, n) reconstruction L G_i R' for every subject."""
        return np.einsum("ap,npq,bq->abn", self.l_factor, self.cores, self.r_factor)

    @property
    def max_trace_increase(self) -> float:
        """Largest relative per-step increase of the objective trace (0 if monotone)."""
        t = self.objective_trace
        if t.size < 2:
            return 0.0
        rel = np.diff(t) / np.maximum(1.0, np.abs(t[:-1]))
        return float(max(0.0, rel.max()))


def default_initial_l(a: int, r1: int) -> np.ndarray:
    """The deterministic default start: the first r1 coordinate directions."""
    l0 = np.zeros((a, r1))
    l0[np.arange(r1), np.arange(r1)] = 1.0
    return l0


def random_initial_l(a: int, r1: int, seed: int) -> np.ndarray:
    """Seeded random orthonormal start, for robustness studies."""
    return random_orthonormal(a, r1, np.random.default_rng(seed))


def objective(t: MaskedTensor, dec: Decomposition, op: SmoothingOperator) -> float:
    """Evaluate the masked-residual-plus-curvature objective at a decomposition."""
    a, b, n = t.dims
    if dec.l_factor.shape[0] != a or dec.r_factor.shape[0] != b or dec.cores.shape[0] != n:
        raise ValueError(
            f"decomposition shapes {dec.l_factor.shape}/{dec.r_factor.shape}/{dec.cores.shape}"
            f" inconsistent with tensor dims {t.dims}"
        )
    recon = dec.reconstruct()
    resid = np.where(t.mask, t.values - recon, 0.0)
    fit_term = float(np.sum(resid * resid))
    if dec.lam == 0:
        return fit_term
    curved = np.tensordot(op.d, recon, axes=(1, 0))
    return fit_term + dec.lam * float(np.sum(curved * curved))


def solve_core(m_i: np.ndarray, l: np.ndarray, r: np.ndarray, op: SmoothingOperator) -> np.ndarray:
    """Closed-form optimal core for one fully observed slice, given L and R."""
    dl = op.d @ l
    s = np.eye(l.shape[1]) + op.lam * (dl.T @ dl)
    np.linalg.cholesky(s)  # asserts positive definiteness (always true for lam >= 0)
    return np.linalg.solve(s, l.T @ m_i @ r)


def _solve_cores(values: np.ndarray, l: np.ndarray, r: np.ndarray,
                 op: SmoothingOperator) -> np.ndarray:
    """Batched solve_core over all frontal slices; returns (n, r1, r2)."""
    a, b, n = values.shape
    r1 = l.shape[1]
    dl = op.d @ l
    s = np.eye(r1) + op.lam * (dl.T @ dl)
    lt_m = (l.T @ values.reshape(a, b * n, order="F")).reshape(r1, b, n, order="F")
    c = np.tensordot(lt_m, r, axes=(1, 0))          # (r1, n, r2)
    g = np.linalg.solve(s, c.reshape(r1, -1)).reshape(r1, n, r.shape[1])
    return np.ascontiguousarray(np.moveaxis(g, 1, 0))


def _top_k(sym: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Eigenvectors/values for the k largest eigenvalues plus a near-tie flag."""
    w, q = np.linalg.eigh(0.5 * (sym + sym.T))
    w = w[::-1]
    q = q[:, ::-1]
    near_tie = False
    if k < w.size:
        near_tie = abs(w[k - 1] - w[k]) < _EIGENGAP_RTOL * max(abs(w[k - 1]), 1e-300)
    return fix_signs(q[:, :k]), w[:k], near_tie


def update_r(values: np.ndarray, u: np.ndarray, op: SmoothingOperator, r2: int) -> np.ndarray:
    """Measure-factor update: top-r2 eigenvectors of sum_i M_i' A^-1/2 U U' A^-1/2 M_i."""
    a, b, n = values.shape
    if r2 > b:
        raise ValueError(f"r2={r2} exceeds measure dimension {b}")
    p = (op.a_inv_sqrt @ values.reshape(a, b * n, order="F"))
    q = (u.T @ p).reshape(u.shape[1], b, n, order="F")
    w = np.ascontiguousarray(q.transpose(1, 0, 2)).reshape(b, -1)
    vecs, _, _ = _top_k(w @ w.T, r2)
    return vecs


def update_u(values: np.ndarray, r: np.ndarray, op: SmoothingOperator, r1: int) -> np.ndarray:
    """Whitened temporal-factor update: top-r1 eigenvectors of
    sum_i A^-1/2 M_i R R' M_i' A^-1/2."""
    a, b, n = values.shape
    if r1 > a:
        raise ValueError(f"r1={r1} exceeds time dimension {a}")
    p = (op.a_inv_sqrt @ values.reshape(a, b * n, order="F")).reshape(a, b, n, order="F")
    v = np.tensordot(p, r, axes=(1, 0)).reshape(a, -1)
    vecs, _, _ = _top_k(v @ v.T, r1)
    return vecs


def recover_l(u: np.ndarray, op: SmoothingOperator, r1: int) -> np.ndarray:
    """De-whiten: orthonormal L spanning col(A^-1/2 U)."""
    b = op.a_inv_sqrt @ u
    sv = np.linalg.svd(b, compute_uv=False)
    if sv[min(r1, sv.size) - 1] < 1e-12 * sv[0]:
        raise np.linalg.LinAlgError("A^-1/2 U is rank deficient; cannot recover L")
    return orthonormal_range(b, r1)


@dataclass
class _InnerFit:
    l: np.ndarray
    r: np.ndarray
    cores: np.ndarray
    trace: list[float]
    converged: bool
    diagnostics: set[str] = field(default_factory=set)


def _inner_smooth(values: np.ndarray, op: SmoothingOperator, opts: FitOptions,
                  initial_l: np.ndarray) -> _InnerFit:
    """Alternating eigen updates for the complete-data smooth fit."""
    a, b, n = values.shape
    r1, r2 = opts.ranks
    total_sq = float(np.sum(values * values))
    flat = values.reshape(a, b * n, order="F")
    p_flat = op.a_inv_sqrt @ flat
    p = p_flat.reshape(a, b, n, order="F")

    u = orthonormal_range(op.a_sqrt @ initial_l, r1)
    r = None
    trace: list[float] = []
    diagnostics: set[str] = set()
    converged = False
    for _ in range(opts.max_inner_iterations):
        q = (u.T @ p_flat).reshape(r1, b, n, order="F")
        w_mat = np.ascontiguousarray(q.transpose(1, 0, 2)).reshape(b, -1)
        r, _, tie_r = _top_k(w_mat @ w_mat.T, r2)
        if tie_r:
            diagnostics.add("near-degenerate eigengap in measure-factor update")
        v = np.tensordot(p, r, axes=(1, 0)).reshape(a, -1)
        u, evals, tie_u = _top_k(v @ v.T, r1)
        if tie_u:
            diagnostics.add("near-degenerate eigengap in temporal-factor update")
        f = total_sq - float(evals.sum())
        trace.append(f)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(prev - f) <= opts.inner_tolerance * max(1.0, abs(prev)):
                converged = True
                break

    l = recover_l(u, op, r1)
    cores = _solve_cores(values, l, r, op)
    return _InnerFit(l, r, cores, trace, converged, diagnostics)


def _inner_penalized(values: np.ndarray, op: SmoothingOperator, opts: FitOptions,
                     initial_l: np.ndarray) -> _InnerFit:
    """Alternating eigen updates for the penalize-the-components variant."""
    a, b, n = values.shape
    r1, r2 = opts.ranks
    total_sq = float(np.sum(values * values))
    flat = values.reshape(a, b * n, order="F")
    stacked = flat.reshape(a, b, n, order="F")
    dtd = op.d.T @ op.d

    l = orthonormal_range(initial_l, r1)
    r = None
    trace: list[float] = []
    diagnostics: set[str] = set()
    converged = False
    for _ in range(opts.max_inner_iterations):
        q = (l.T @ flat).reshape(r1, b, n, order="F")
        w_mat = np.ascontiguousarray(q.transpose(1, 0, 2)).reshape(b, -1)
        r, _, tie_r = _top_k(w_mat @ w_mat.T, r2)
        if tie_r:
            diagnostics.add("near-degenerate eigengap in measure-factor update")
        v = np.tensordot(stacked, r, axes=(1, 0)).reshape(a, -1)
        l, evals, tie_l = _top_k(v @ v.T - opts.lam * dtd, r1)
        if tie_l:
            diagnostics.add("near-degenerate eigengap in temporal-factor update")
        f = total_sq - float(evals.sum())
        trace.append(f)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(prev - f) <= opts.inner_tolerance * max(1.0, abs(prev)):
                converged = True
                break

    lt_m = (l.T @ flat).reshape(r1, b, n, order="F")
    cores = np.ascontiguousarray(np.moveaxis(np.tensordot(lt_m, r, axes=(1, 0)), 1, 0))
    return _InnerFit(l, r, cores, trace, converged, diagnostics)


def _validate_input(t: MaskedTensor, opts: FitOptions, op: SmoothingOperator) -> None:
    opts.validate(t.dims)
    if op.grid_length != t.dims[0]:
        raise ValueError(
            f"operator grid length {op.grid_length} != time dimension {t.dims[0]}"
        )
    if op.lam != opts.lam:
        raise ValueError(
            f"operator built for lambda={op.lam} but options request lambda={opts.lam}"
        )
    if not np.isfinite(t.values[t.mask]).all():
        raise ValueError("observed entries contain non-finite values")
    if not t.mask.any():
        raise UnidentifiableFiberError("all entries are missing")
    missing_rows = np.flatnonzero(~t.mask.any(axis=(1, 2)))
    if missing_rows.size:
        raise UnidentifiableFiberError(
            f"unidentifiable fiber: time rows {missing_rows.tolist()} have no observations"
        )
    missing_cols = np.flatnonzero(~t.mask.any(axis=(0, 2)))
    if missing_cols.size:
        raise UnidentifiableFiberError(
            f"unidentifiable fiber: measure columns {missing_cols.tolist()} have no observations"
        )


def fit_complete(t: MaskedTensor, opts: FitOptions, op: SmoothingOperator) -> Decomposition:
    """Fit a fully observed tensor by alternating closed-form updates."""
    if not t.mask.all():
        raise ValueError("fit_complete requires a fully observed tensor; use fit_missing")
    _validate_input(t, opts, op)
    if opts.variant == "penalize-components":
        raise ValueError("use fit_penalized_components for the penalize-components variant")
    a, _, _ = t.dims
    initial_l = opts.initial_l if opts.initial_l is not None else default_initial_l(a, opts.ranks[0])
    res = _inner_smooth(t.values, op, opts, initial_l)
    return Decomposition(
        l_factor=res.l, r_factor=res.r, cores=res.cores, lam=opts.lam, ranks=opts.ranks,
        objective_trace=np.asarray(res.trace), converged=res.converged,
        iterations=(1, len(res.trace)), diagnostics=tuple(sorted(res.diagnostics)),
    )


def impute_step(t: MaskedTensor, dec: Decomposition) -> np.ndarray:
    """Replace unobserved entries by the reconstruction; observed entries pass through."""
    return np.where(t.mask, t.values, dec.reconstruct())


def _fit_with_imputation(t: MaskedTensor, opts: FitOptions, op: SmoothingOperator,
                         inner) -> Decomposition:
    _validate_input(t, opts, op)
    a, _, _ = t.dims
    mask = t.mask
    unobserved = ~mask
    if opts.initial_values is not None:
        if opts.initial_values.shape != t.dims:
            raise ValueError("initial_values shape does not match tensor dims")
        filled = np.where(mask, t.values, opts.initial_values)
    else:
        filled = t.filled(opts.initial_fill)

    l_init = opts.initial_l if opts.initial_l is not None else default_initial_l(a, opts.ranks[0])
    trace: list[float] = []
    diagnostics: set[str] = set()
    res = None
    outer = 0
    converged = False
    for outer in range(1, opts.max_outer_iterations + 1):
        res = inner(filled, op, opts, l_init)
        trace.extend(res.trace)
        diagnostics |= res.diagnostics
        recon = np.einsum("ap,npq,bq->abn", res.l, res.cores, res.r)
        new_filled = np.where(mask, t.values, recon)
        delta = float(np.linalg.norm((new_filled - filled)[unobserved]))
        base = float(np.linalg.norm(filled[unobserved]))
        filled = new_filled
        l_init = res.l
        if delta <= opts.outer_tolerance * max(base, 1e-30):
            converged = True
            break

    return Decomposition(
        l_factor=res.l, r_factor=res.r, cores=res.cores, lam=opts.lam, ranks=opts.ranks,
        objective_trace=np.asarray(trace), converged=converged,
        iterations=(outer, len(trace)), diagnostics=tuple(sorted(diagnostics)),
        imputed=filled,
    )


def fit_missing(t: MaskedTensor, opts: FitOptions, op: SmoothingOperator) -> Decomposition:
    """Fit a tensor with missing entries by iterative imputation around the inner solver.

    Missing entries start at ``opts.initial_fill`` (or ``opts.initial_values``),
    and the outer loop alternates a complete-data fit with re-imputation until
    the relative change of the imputed entries drops below
    ``opts.outer_tolerance``. The final imputed tensor is attached to the
    returned decomposition.
    """
    if opts.variant == "penalize-components":
        raise ValueError("use fit_penalized_components for the penalize-components variant")
    return _fit_with_imputation(t, opts, op, _inner_smooth)


def fit_penalized_components(t: MaskedTensor, opts: FitOptions,
                             op: SmoothingOperator) -> Decomposition:
    """Fit with the penalty on L's columns instead of the reconstruction.

    Kept for demonstration: at large lambda the orthogonality constraint forces
    the columns of L onto the low-frequency eigenvectors of D'D, producing
    sinusoidal imputations instead of flat ones.
    """
    if opts.variant != "penalize-components":
        opts = replace(opts, variant="penalize-components")
        opts.validate(t.dims)
    return _fit_with_imputation(t, opts, op, _inner_penalized)
