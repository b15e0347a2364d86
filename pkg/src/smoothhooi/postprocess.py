"""Rotation to an identifiable form, variance accounting, and effect curves.

The fitted factors are only determined up to orthogonal rotations. Rotating by
the left singular vectors of the core unfoldings orders the components by
signal strength and makes the rotated core rows/columns orthogonal across
subjects, which pins the decomposition down whenever those singular values are
distinct. Variance shares and component effect curves are computed from the
rotated form.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import fix_signs, relative_gaps
from .decompose import Decomposition
from .tensor import MaskedTensor, unfold

_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class IdentifiedDecomposition:
    """Rotated factors with components ordered by decreasing signal strength."""

    l_tilde: np.ndarray
    r_tilde: np.ndarray
    cores_tilde: np.ndarray              # (n, r1, r2)
    mode1_singular_values: np.ndarray    # length r1, decreasing
    mode2_singular_values: np.ndarray    # length r2, decreasing
    lam: float
    ranks: tuple[int, int]
    warnings: tuple[str, ...] = ()

    def reconstruct(self) -> np.ndarray:
        return np.einsum("ap,npq,bq->abn", self.l_tilde, self.cores_tilde, self.r_tilde)


def _padded_singular_values(mat: np.ndarray, length: int) -> np.ndarray:
    s = np.linalg.svd(mat, compute_uv=False)
    out = np.zeros(length)
    out[: s.size] = s[:length] if s.size >= length else s
    return out


def identify(dec: Decomposition) -> IdentifiedDecomposition:
    """Rotate a fitted decomposition into its canonical (ordered) form.

    The rotations are the left singular vectors of the mode-1 and mode-2 core
    unfoldings; the reconstruction is unchanged. Near-equal singular values
    within a mode leave the rotation arbitrary in that block, which is surfaced
    as a warning rather than an error.
    """
    r1, r2 = dec.ranks
    g_tensor = np.moveaxis(dec.cores, 0, 2)  # (r1, r2, n)
    u_l, _, _ = np.linalg.svd(unfold(g_tensor, 1), full_matrices=True)
    u_r, _, _ = np.linalg.svd(unfold(g_tensor, 2), full_matrices=True)
    u_l = fix_signs(u_l)
    u_r = fix_signs(u_r)

    l_tilde = dec.l_factor @ u_l
    r_tilde = dec.r_factor @ u_r
    cores_tilde = np.einsum("pk,npq,ql->nkl", u_l, dec.cores, u_r)

    g_rot = np.moveaxis(cores_tilde, 0, 2)
    s1 = _padded_singular_values(unfold(g_rot, 1), r1)
    s2 = _padded_singular_values(unfold(g_rot, 2), r2)

    warnings = []
    for mode, s in ((1, s1), (2, s2)):
        if s.size >= 2 and (relative_gaps(s) < _TIE_RTOL).any():
            warnings.append(
                f"non-identifiable rotation: repeated mode-{mode} singular values"
            )

    return IdentifiedDecomposition(
        l_tilde=l_tilde, r_tilde=r_tilde, cores_tilde=cores_tilde,
        mode1_singular_values=s1, mode2_singular_values=s2,
        lam=dec.lam, ranks=dec.ranks, warnings=tuple(warnings),
    )


def explained_variance(t: MaskedTensor, dec) -> float:
    """Share of the observed sum of squares captured by the reconstruction."""
    denom = float(np.sum(np.where(t.mask, t.values, 0.0) ** 2))
    if denom == 0.0:
        raise ValueError("cannot compute explained variance of zero-norm data")
    recon = dec.reconstruct()
    num = float(np.sum(np.where(t.mask, recon, 0.0) ** 2))
    return num / denom


def component_variance_profile(identified: IdentifiedDecomposition,
                               t: MaskedTensor) -> tuple[np.ndarray, np.ndarray]:
    """Per-component explained-variance shares for the temporal and measure modes.

    Component k's share is the explained variance of the reconstruction
    restricted to the k-th column of the rotated factor; on complete data the
    mode-wise shares sum to the total explained variance (orthogonal split).
    """
    r1, r2 = identified.ranks
    denom = float(np.sum(np.where(t.mask, t.values, 0.0) ** 2))
    if denom == 0.0:
        raise ValueError("cannot compute variance shares of zero-norm data")

    mode1 = np.empty(r1)
    for k in range(r1):
        recon_k = np.einsum(
            "a,nq,bq->abn", identified.l_tilde[:, k], identified.cores_tilde[:, k, :],
            identified.r_tilde,
        )
        mode1[k] = np.sum(np.where(t.mask, recon_k, 0.0) ** 2) / denom
    mode2 = np.empty(r2)
    for k in range(r2):
        recon_k = np.einsum(
            "ap,np,b->abn", identified.l_tilde, identified.cores_tilde[:, :, k],
            identified.r_tilde[:, k],
        )
        mode2[k] = np.sum(np.where(t.mask, recon_k, 0.0) ** 2) / denom
    return mode1, mode2


@dataclass(frozen=True)
class EffectCurves:
    """Per-measure mean trajectories with one-SD component shifts, original units."""

    hours: np.ndarray        # clock hour per grid row
    measures: tuple[str, ...]
    mean: np.ndarray         # (a, b)
    plus_1sd: np.ndarray     # (a, b)
    minus_1sd: np.ndarray    # (a, b)
    component: int


def component_effect_curves(identified: IdentifiedDecomposition, t: MaskedTensor,
                            component: int, scale_info) -> EffectCurves:
    """How one temporal component shifts the average trajectory of each measure.

    Follows the construction used for reporting: take the sample mean of the
    reconstructions, isolate the chosen component's per-subject contribution
    direction (its core row times the measure loadings), compute the
    across-subject standard deviation per measure, and shift the mean curve up
    and down by one standard deviation times the component's temporal shape.
    Output is rescaled to original measurement units via ``scale_info``.
    """
    a, b, n = t.dims
    r1, _ = identified.ranks
    if not 0 <= component < r1:
        raise IndexError(f"component {component} out of range [0, {r1})")

    recon = identified.reconstruct()
    mean_curve = recon.mean(axis=2)                                # (a, b), normalized
    v = identified.cores_tilde[:, component, :] @ identified.r_tilde.T   # (n, b)
    sd = v.std(axis=0, ddof=1) if n > 1 else np.zeros(b)
    shift = np.outer(identified.l_tilde[:, component], sd)          # (a, b)

    means = np.asarray(scale_info.means, dtype=float)
    sds = np.asarray(scale_info.sds, dtype=float)
    hours = (scale_info.grid_start_hour + np.arange(a)) % 24
    return EffectCurves(
        hours=hours,
        measures=tuple(scale_info.measures),
        mean=mean_curve * sds + means,
        plus_1sd=(mean_curve + shift) * sds + means,
        minus_1sd=(mean_curve - shift) * sds + means,
        component=component,
    )
