"""Select ranks and the smoothing parameter by entry-masking cross-validation.

Observed entries are split into folds; each fold in turn is hidden from the
fit and scored on held-out squared error. The search sweeps a coarse log grid
over lambda crossed with candidate ranks, then refines lambda linearly around
the winner. Warm starts chain the fits along each lambda path.
"""

import numpy as np

import smoothhooi as sh

config = sh.SimulationConfig(a=24, b=3, n=100, truth_ranks=(3, 2))
truth = sh.generate_truth(config, seed=10)
noisy = sh.add_noise(truth.values, 1.0, seed=11)
masked = sh.apply_random_missing(noisy, 0.2, seed=12)

folds = sh.make_folds(masked, k=5, seed=13)
spec = sh.GridSpec(r1_values=(2, 3, 4), r2_values=(2,),
                   lambda_min=1.0, lambda_max=50.0,
                   coarse_points=5, fine_points=3)
report = sh.grid_search(masked, folds, spec)

print("stage   r1  r2    lambda    cv error")
for e in report.entries:
    marker = " <- selected" if (e.r1, e.r2, e.lam) == report.selected else ""
    print(f"{e.stage:6s} {e.r1:3d} {e.r2:3d} {e.lam:9.3f} {e.error:11.2f}{marker}")

r1, r2, lam = report.selected
print(f"\nselected r1={r1} r2={r2} lambda={lam:.2f} (truth was r1=3 r2=2)")

op = sh.build_operator(24, lam)
dec = sh.fit_missing(masked, sh.FitOptions(lam=lam, ranks=(r1, r2)), op)
ident = sh.identify(dec)
rep = sh.parsimony_report(ident, masked, threshold=0.95)
print("temporal shares:", np.round(rep.mode1_shares, 3),
      "-> parsimony suggests ranks", rep.suggested_ranks,
      "(advisory: refit and re-tune lambda after reducing)")
