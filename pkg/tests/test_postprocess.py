import numpy as np
import pytest

import smoothhooi as sh
from smoothhooi.tensor import unfold
from synth import fitted_masked_instance, smooth_truth


def _canonical_decomposition(seed, a=10, b=3):
    """Decomposition whose cores already have ordered, orthogonal structure.

    Scores follow a Hadamard design H (orthogonal across subjects) scaled by a
    coefficient matrix with orthogonal columns and strictly decreasing row and
    column norms, so both core-unfolding gram matrices are exactly diagonal
    with distinct decreasing entries.
    """
    rng = np.random.default_rng(seed)
    r1, r2, n = 3, 2, 4
    l = np.linalg.qr(rng.standard_normal((a, r1)))[0]
    r = np.linalg.qr(rng.standard_normal((b, r2)))[0]
    h = np.array([[1, 1, 1], [1, -1, 1], [1, 1, -1], [1, -1, -1]], dtype=float)
    c = np.array([[2.0, 0.0], [0.0, 1.5], [1.0, 0.0]])
    cores = h[:, :, None] * c[None, :, :]
    return sh.Decomposition(l_factor=l, r_factor=r, cores=cores, lam=0.0,
                            ranks=(r1, r2), objective_trace=np.asarray([1.0]),
                            converged=True, iterations=(1, 1))


def test_identify_preserves_reconstruction_and_orthogonalizes():
    _, dec, _ = fitted_masked_instance(seed=40)
    ident = sh.identify(dec)
    recon_before = dec.reconstruct()
    recon_after = ident.reconstruct()
    for i in range(recon_before.shape[2]):
        assert np.linalg.norm(recon_after[:, :, i] - recon_before[:, :, i]) <= 1e-10

    g_rot = np.moveaxis(ident.cores_tilde, 0, 2)
    for mode, r in ((1, dec.ranks[0]), (2, dec.ranks[1])):
        gram = unfold(g_rot, mode) @ unfold(g_rot, mode).T
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() <= 1e-8
        diag = np.diag(gram)
        assert np.all(np.diff(diag) <= 1e-10)


def test_identify_on_canonical_cores_is_near_identity():
    dec = _canonical_decomposition(seed=41)
    ident = sh.identify(dec)
    # the rotation is diagonal +-1 when cores are already canonical
    for col in range(dec.ranks[0]):
        overlap = abs(float(dec.l_factor[:, col] @ ident.l_tilde[:, col]))
        assert overlap == pytest.approx(1.0, abs=1e-10)


def test_identify_round_trip_recovers_canonical_form():
    rng = np.random.default_rng(42)
    dec = _canonical_decomposition(seed=43)
    canonical = sh.identify(dec)
    u = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    v = np.linalg.qr(rng.standard_normal((2, 2)))[0]
    scrambled = sh.Decomposition(
        l_factor=dec.l_factor @ u, r_factor=dec.r_factor @ v,
        cores=np.einsum("pk,npq,ql->nkl", u, dec.cores, v),
        lam=0.0, ranks=dec.ranks, objective_trace=np.asarray([1.0]),
        converged=True, iterations=(1, 1))
    recovered = sh.identify(scrambled)
    np.testing.assert_allclose(np.abs(recovered.l_tilde), np.abs(canonical.l_tilde),
                               atol=1e-8)
    np.testing.assert_allclose(np.abs(recovered.cores_tilde),
                               np.abs(canonical.cores_tilde), atol=1e-8)


def test_identify_idempotent_up_to_signs():
    _, dec, _ = fitted_masked_instance(seed=44)
    once = sh.identify(dec)
    again_input = sh.Decomposition(
        l_factor=once.l_tilde, r_factor=once.r_tilde, cores=once.cores_tilde,
        lam=dec.lam, ranks=dec.ranks, objective_trace=dec.objective_trace,
        converged=dec.converged, iterations=dec.iterations)
    twice = sh.identify(again_input)
    np.testing.assert_allclose(np.abs(twice.l_tilde), np.abs(once.l_tilde), atol=1e-9)
    np.testing.assert_allclose(np.abs(twice.r_tilde), np.abs(once.r_tilde), atol=1e-9)
    np.testing.assert_allclose(np.abs(twice.cores_tilde), np.abs(once.cores_tilde),
                               atol=1e-9)


def test_identify_warns_on_repeated_singular_values():
    n, r1, r2 = 8, 2, 2
    cores = np.tile(np.eye(2)[None], (n, 1, 1))  # perfectly tied strengths
    dec = sh.Decomposition(
        l_factor=np.eye(5)[:, :2], r_factor=np.eye(3)[:, :2], cores=cores,
        lam=0.0, ranks=(r1, r2), objective_trace=np.asarray([1.0]),
        converged=True, iterations=(1, 1))
    ident = sh.identify(dec)
    assert any("non-identifiable" in w for w in ident.warnings)


def test_explained_variance_bounds_and_oracle():
    rng = np.random.default_rng(45)
    values = rng.standard_normal((5, 3, 4))
    t = sh.MaskedTensor.fully_observed(values)
    full_rank = sh.fit_complete(t, sh.FitOptions(lam=0.0, ranks=(5, 3)),
                                sh.build_operator(5, 0.0))
    assert sh.explained_variance(t, full_rank) == pytest.approx(1.0, abs=1e-12)

    zero = sh.Decomposition(
        l_factor=np.eye(5)[:, :2], r_factor=np.eye(3)[:, :2],
        cores=np.zeros((4, 2, 2)), lam=0.0, ranks=(2, 2),
        objective_trace=np.asarray([1.0]), converged=True, iterations=(1, 1))
    assert sh.explained_variance(t, zero) == 0.0

    masked, dec, _ = fitted_masked_instance(seed=46)
    recon = dec.reconstruct()
    num = sum(sh.restricted_norm_sq(recon[:, :, i], masked.mask[:, :, i])
              for i in range(masked.dims[2]))
    den = sum(sh.restricted_norm_sq(masked.values[:, :, i], masked.mask[:, :, i])
              for i in range(masked.dims[2]))
    np.testing.assert_allclose(sh.explained_variance(masked, dec), num / den, rtol=1e-12)

    zeros = sh.MaskedTensor.fully_observed(np.zeros((5, 3, 4)))
    with pytest.raises(ValueError):
        sh.explained_variance(zeros, zero)


def test_component_shares_single_component_equals_total():
    values, _, _, _ = smooth_truth(8, 3, 6, 1, 1, seed=47)
    noisy = values + np.random.default_rng(48).normal(0, 0.05, values.shape)
    t = sh.MaskedTensor.fully_observed(noisy)
    dec = sh.fit_complete(t, sh.FitOptions(lam=0.0, ranks=(1, 1)),
                          sh.build_operator(8, 0.0))
    ident = sh.identify(dec)
    mode1, mode2 = sh.component_variance_profile(ident, t)
    total = sh.explained_variance(t, ident)
    assert mode1[0] == pytest.approx(total, rel=1e-10)
    assert mode2[0] == pytest.approx(total, rel=1e-10)


def test_component_shares_ordered_and_sum_to_total_on_complete_data():
    values, _, _, _ = smooth_truth(10, 3, 15, 3, 2, seed=49)
    noisy = values + np.random.default_rng(50).normal(0, 0.1, values.shape)
    t = sh.MaskedTensor.fully_observed(noisy)
    dec = sh.fit_complete(t, sh.FitOptions(lam=0.5, ranks=(3, 2)),
                          sh.build_operator(10, 0.5))
    ident = sh.identify(dec)
    mode1, mode2 = sh.component_variance_profile(ident, t)
    total = sh.explained_variance(t, ident)
    assert np.all(np.diff(mode1) <= 1e-12)
    assert np.all(np.diff(mode2) <= 1e-12)
    np.testing.assert_allclose(mode1.sum(), total, atol=1e-8)
    np.testing.assert_allclose(mode2.sum(), total, atol=1e-8)


def test_effect_curves_zero_spread_and_linearity():
    a, b, n, r1, r2 = 8, 3, 6, 2, 2
    rng = np.random.default_rng(51)
    l = np.linalg.qr(rng.standard_normal((a, r1)))[0]
    r = np.linalg.qr(rng.standard_normal((b, r2)))[0]
    cores = np.tile(rng.normal(0, 2, (1, r1, r2)), (n, 1, 1))  # identical subjects
    dec = sh.Decomposition(l_factor=l, r_factor=r, cores=cores, lam=0.0, ranks=(r1, r2),
                           objective_trace=np.asarray([1.0]), converged=True,
                           iterations=(1, 1))
    t = sh.MaskedTensor.fully_observed(dec.reconstruct())
    ident = sh.identify(dec)
    info = sh.NormalizationInfo.identity(("m1", "m2", "m3"))
    curves = sh.component_effect_curves(ident, t, 0, info)
    np.testing.assert_allclose(curves.plus_1sd, curves.mean, atol=1e-12)
    np.testing.assert_allclose(curves.minus_1sd, curves.mean, atol=1e-12)

    # doubling the scores doubles the shift (in normalized units)
    varied = cores + rng.normal(0, 1.0, cores.shape)
    dec1 = sh.Decomposition(l_factor=l, r_factor=r, cores=varied, lam=0.0,
                            ranks=(r1, r2), objective_trace=np.asarray([1.0]),
                            converged=True, iterations=(1, 1))
    dec2 = sh.Decomposition(l_factor=l, r_factor=r, cores=2.0 * varied, lam=0.0,
                            ranks=(r1, r2), objective_trace=np.asarray([1.0]),
                            converged=True, iterations=(1, 1))
    i1, i2 = sh.identify(dec1), sh.identify(dec2)
    c1 = sh.component_effect_curves(i1, t, 0, info)
    c2 = sh.component_effect_curves(i2, t, 0, info)
    shift1 = c1.plus_1sd - c1.mean
    shift2 = c2.plus_1sd - c2.mean
    np.testing.assert_allclose(np.abs(shift2), 2.0 * np.abs(shift1), atol=1e-10)


def test_effect_curves_match_analytic_construction():
    a, b, n, r1, r2 = 8, 3, 40, 2, 1
    rng = np.random.default_rng(52)
    l = np.linalg.qr(rng.standard_normal((a, r1)))[0]
    r = np.linalg.qr(rng.standard_normal((b, r2)))[0]
    cores = np.zeros((n, r1, r2))
    cores[:, 0, 0] = rng.normal(5.0, 2.0, n)
    cores[:, 1, 0] = rng.normal(0.0, 0.5, n)
    dec = sh.Decomposition(l_factor=l, r_factor=r, cores=cores, lam=0.0, ranks=(r1, r2),
                           objective_trace=np.asarray([1.0]), converged=True,
                           iterations=(1, 1))
    ident = sh.identify(dec)
    t = sh.MaskedTensor.fully_observed(dec.reconstruct())
    info = sh.NormalizationInfo.identity(("m1", "m2", "m3"))
    for k in range(r1):
        curves = sh.component_effect_curves(ident, t, k, info)
        scores_k = ident.cores_tilde[:, k, 0]
        analytic = np.outer(ident.l_tilde[:, k],
                            np.std(scores_k, ddof=1) * np.abs(ident.r_tilde[:, 0]))
        got = np.abs(curves.plus_1sd - curves.mean)
        np.testing.assert_allclose(got, np.abs(analytic), atol=1e-8)


def test_effect_curves_component_out_of_range():
    _, dec, _ = fitted_masked_instance(seed=53)
    ident = sh.identify(dec)
    t, _, _ = fitted_masked_instance(seed=53)[0], None, None
    info = sh.NormalizationInfo.identity(("m1", "m2", "m3"))
    with pytest.raises(IndexError):
        sh.component_effect_curves(ident, t, 5, info)


def test_effect_curves_original_units_and_hours():
    masked, dec, _ = fitted_masked_instance(seed=54, a=24)
    ident = sh.identify(dec)
    info = sh.NormalizationInfo(("SBP", "DBP", "HR"), np.array([120.0, 75.0, 70.0]),
                                np.array([15.0, 10.0, 9.0]), grid_start_hour=12)
    curves = sh.component_effect_curves(ident, masked, 0, info)
    assert curves.hours[0] == 12
    assert curves.hours[-1] == 11
    norm_mean = ident.reconstruct().mean(axis=2)
    np.testing.assert_allclose(curves.mean, norm_mean * info.sds + info.means,
                               atol=1e-12)
