"""Shared builders for synthetic test instances."""

import numpy as np

import smoothhooi as sh


def smooth_truth(a, b, n, r1, r2, seed, core_sd=3.0):
    """Exactly low-rank tensor with a smooth temporal factor."""
    rng = np.random.default_rng(seed)
    l = sh.default_temporal_basis(a, r1)
    r = sh.default_measure_basis(b, r2)
    cores = rng.normal(0.0, core_sd, (n, r1, r2))
    # distinct component strengths keep rotations identifiable
    cores *= (2.0 ** -np.arange(r1))[None, :, None]
    values = np.einsum("ap,npq,bq->abn", l, cores, r)
    return values, l, r, cores


def random_decomposition(a, b, n, r1, r2, lam, seed):
    """A structurally valid decomposition with random orthonormal factors."""
    rng = np.random.default_rng(seed)
    l = np.linalg.qr(rng.standard_normal((a, r1)))[0]
    r = np.linalg.qr(rng.standard_normal((b, r2)))[0]
    cores = rng.normal(0.0, 2.0, (n, r1, r2))
    return sh.Decomposition(
        l_factor=l, r_factor=r, cores=cores, lam=lam, ranks=(r1, r2),
        objective_trace=np.asarray([1.0]), converged=True, iterations=(1, 1),
    )


def fitted_masked_instance(seed, a=12, b=3, n=10, r1=2, r2=2, lam=0.5,
                           missing=0.2, noise=0.1):
    """Noisy masked tensor plus its fitted decomposition and operator."""
    values, l, r, cores = smooth_truth(a, b, n, r1, r2, seed)
    rng = np.random.default_rng(seed + 1)
    noisy = values + rng.normal(0.0, noise, values.shape)
    if missing:
        masked = sh.apply_random_missing(noisy, missing, seed + 2)
    else:
        masked = sh.MaskedTensor.fully_observed(noisy)
    op = sh.build_operator(a, lam)
    dec = sh.fit_missing(masked, sh.FitOptions(lam=lam, ranks=(r1, r2)), op)
    return masked, dec, op
