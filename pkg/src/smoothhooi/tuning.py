"""Entry-masking cross-validation over (r1, r2, lambda) with coarse-to-fine search.

Observed entries are partitioned into k folds; each fold in turn is masked out
of the training data (becoming extra missing entries), the decomposition is
refit, and the held-out squared error is accumulated. The search first sweeps
a logarithmic lambda grid crossed with the rank ranges, then refines lambda
linearly around the coarse minimizer. Within a rank pair, lambda values are
visited in increasing order and each fold's fit warm-starts from its own
previous-lambda solution (imputed tensor and L).
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from ._parallel import worker_count
from .decompose import FitOptions, fit_missing
from .postprocess import IdentifiedDecomposition, component_variance_profile, explained_variance
from .smoothing import build_operator
from .tensor import MaskedTensor


@dataclass(frozen=True)
class FoldAssignment:
    """Fold index per observed entry; unobserved entries carry -1."""

    k: int
    assignment: np.ndarray
    seed: int

    def validation_mask(self, j: int) -> np.ndarray:
        return self.assignment == j


def make_folds(t: MaskedTensor, k: int, seed: int) -> FoldAssignment:
    """Uniform random partition of the observed entries into k folds.

    Fold sizes differ by at most one; the same seed reproduces the same
    assignment exactly.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    n_obs = t.n_observed
    if k > n_obs:
        raise ValueError(f"k={k} exceeds the {n_obs} observed entries")
    rng = np.random.default_rng(seed)
    observed_flat = np.flatnonzero(t.mask.ravel(order="C"))
    labels = np.arange(observed_flat.size) % k
    assignment_flat = np.full(t.mask.size, -1, dtype=np.int64)
    assignment_flat[observed_flat[rng.permutation(observed_flat.size)]] = labels
    return FoldAssignment(k, assignment_flat.reshape(t.dims), seed)


def _degenerate_training_mask(train_mask: np.ndarray) -> bool:
    return (not train_mask.any()
            or bool((~train_mask.any(axis=(1, 2))).any())
            or bool((~train_mask.any(axis=(0, 2))).any()))


def _cv_error_stateful(t, folds, r1, r2, lam, base_opts, boundary, warm_states):
    """One CV evaluation; returns (error, fold states, skipped folds, trace diag)."""
    a, _, _ = t.dims
    op = build_operator(a, lam, boundary)
    fold_errors = []
    skipped = []
    states = []
    max_increase = 0.0
    for j in range(folds.k):
        val_mask = folds.validation_mask(j)
        train_mask = t.mask & ~val_mask
        if _degenerate_training_mask(train_mask):
            skipped.append(j)
            states.append(None)
            continue
        opts = replace(base_opts, lam=lam, ranks=(r1, r2))
        if warm_states is not None and warm_states[j] is not None:
            opts.initial_l, opts.initial_values = warm_states[j]
        dec = fit_missing(MaskedTensor(t.values, train_mask), opts, op)
        resid = np.where(val_mask, t.values - dec.reconstruct(), 0.0)
        fold_errors.append(float(np.sum(resid * resid)))
        states.append((dec.l_factor, dec.imputed))
        max_increase = max(max_increase, dec.max_trace_increase)
    if not fold_errors:
        raise ValueError(
            f"every fold left a degenerate training mask at ranks ({r1}, {r2})"
        )
    return float(np.mean(fold_errors)), states, skipped, max_increase


def cv_error(t: MaskedTensor, folds: FoldAssignment, r1: int, r2: int, lam: float,
             opts: FitOptions | None = None, boundary: str = "periodic") -> float:
    """Mean over folds of the held-out squared reconstruction error.

    Folds whose removal empties a whole time row or measure column are skipped
    (with a warning) and the mean is taken over the remaining folds.
    """
    base = opts if opts is not None else FitOptions(lam=lam, ranks=(r1, r2))
    error, _, skipped, _ = _cv_error_stateful(t, folds, r1, r2, lam, base, boundary, None)
    if skipped:
        warnings.warn(f"skipped degenerate folds {skipped} at ranks ({r1}, {r2})",
                      stacklevel=2)
    return error


@dataclass(frozen=True)
class GridPoint:
    stage: str              # "coarse" | "fine"
    r1: int
    r2: int
    lam: float
    error: float
    warm_start: bool
    skipped_folds: tuple[int, ...]


@dataclass
class GridSpec:
    """Search space: rank ranges plus a lambda interval."""

    r1_values: tuple[int, ...]
    r2_values: tuple[int, ...]
    lambda_min: float = 1.0
    lambda_max: float = 50.0
    coarse_points: int = 8
    fine_points: int = 7

    def __post_init__(self):
        self.r1_values = tuple(self.r1_values)
        self.r2_values = tuple(self.r2_values)
        if not self.r1_values or not self.r2_values:
            raise ValueError("empty rank range")
        if self.lambda_min <= 0 or self.lambda_max < self.lambda_min:
            raise ValueError(
                f"need 0 < lambda_min <= lambda_max, got [{self.lambda_min}, {self.lambda_max}]"
            )

    def coarse_lambdas(self) -> np.ndarray:
        if self.lambda_min == self.lambda_max:
            return np.asarray([self.lambda_min])
        return np.geomspace(self.lambda_min, self.lambda_max, self.coarse_points)


@dataclass(frozen=True)
class CvReport:
    """Every evaluated grid point, the selected configuration, and search lineage."""

    entries: tuple[GridPoint, ...]
    selected: tuple[int, int, float]
    selected_error: float
    k: int
    seed: int
    max_trace_increase: float

    @property
    def grid(self) -> list[tuple[int, int, float]]:
        return [(e.r1, e.r2, e.lam) for e in self.entries]

    @property
    def errors(self) -> np.ndarray:
        return np.asarray([e.error for e in self.entries])


def _lambda_chain(t, folds, r1, r2, lambdas, base_opts, boundary, stage):
    points = []
    states = None
    max_increase = 0.0
    for idx, lam in enumerate(np.sort(np.asarray(lambdas, dtype=float))):
        error, states, skipped, mti = _cv_error_stateful(
            t, folds, r1, r2, float(lam), base_opts, boundary, states)
        max_increase = max(max_increase, mti)
        points.append(GridPoint(stage, r1, r2, float(lam), error, idx > 0, tuple(skipped)))
    return points, max_increase


def grid_search(t: MaskedTensor, folds: FoldAssignment, grid_spec: GridSpec,
                opts: FitOptions | None = None, boundary: str = "periodic",
                n_jobs: int | None = None) -> CvReport:
    """Coarse-to-fine CV search over ranks and lambda.

    Stage 1 crosses the rank ranges with a logarithmic lambda grid; stage 2
    re-searches lambda linearly between the coarse neighbors of the stage-1
    minimizer at the minimizer's rank pair. Rank pairs run in parallel; the
    lambda chain within a pair is sequential by construction (warm starts).
    """
    base_opts = opts if opts is not None else FitOptions(lam=0.0, ranks=(1, 1))
    coarse = grid_spec.coarse_lambdas()
    pairs = [(r1, r2) for r1 in grid_spec.r1_values for r2 in grid_spec.r2_values]

    jobs = n_jobs if n_jobs is not None else min(worker_count(), len(pairs))
    chains = Parallel(n_jobs=jobs)(
        delayed(_lambda_chain)(t, folds, r1, r2, coarse, base_opts, boundary, "coarse")
        for r1, r2 in pairs
    )
    entries: list[GridPoint] = []
    max_increase = 0.0
    for points, mti in chains:
        entries.extend(points)
        max_increase = max(max_increase, mti)

    if not np.isfinite([e.error for e in entries]).all():
        raise ValueError("non-finite cross-validation error encountered")

    best = min(entries, key=lambda e: e.error)
    if grid_spec.fine_points > 0 and coarse.size > 1:
        idx = int(np.flatnonzero(np.isclose(coarse, best.lam))[0])
        lo = coarse[max(idx - 1, 0)]
        hi = coarse[min(idx + 1, coarse.size - 1)]
        fine = np.linspace(lo, hi, grid_spec.fine_points + 2)[1:-1]
        fine = np.asarray([lam for lam in fine if not np.isclose(lam, coarse).any()])
        if fine.size:
            points, mti = _lambda_chain(
                t, folds, best.r1, best.r2, fine, base_opts, boundary, "fine")
            entries.extend(points)
            max_increase = max(max_increase, mti)
            best = min(entries, key=lambda e: e.error)

    return CvReport(
        entries=tuple(entries),
        selected=(best.r1, best.r2, best.lam),
        selected_error=best.error,
        k=folds.k,
        seed=folds.seed,
        max_trace_increase=max_increase,
    )


@dataclass(frozen=True)
class ParsimonyReport:
    """Advisory rank reduction: refit and re-tune lambda after acting on it."""

    mode1_shares: np.ndarray
    mode2_shares: np.ndarray
    total_explained: float
    suggested_ranks: tuple[int, int]
    threshold: float


def parsimony_report(identified: IdentifiedDecomposition, t: MaskedTensor,
                     threshold: float = 0.95) -> ParsimonyReport:
    """Smallest ranks whose leading components keep >= threshold of the explained variance."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    mode1, mode2 = component_variance_profile(identified, t)
    total = explained_variance(t, identified)

    def smallest_keep(shares: np.ndarray) -> int:
        target = threshold * total
        cum = np.cumsum(shares)
        hits = np.flatnonzero(cum >= target - 1e-12)
        return int(hits[0]) + 1 if hits.size else shares.size

    return ParsimonyReport(
        mode1_shares=mode1, mode2_shares=mode2, total_explained=total,
        suggested_ranks=(smallest_keep(mode1), smallest_keep(mode2)),
        threshold=threshold,
    )
