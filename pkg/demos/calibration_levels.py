"""
Choosing the significance level
===============================

The bound at each checkpoint is an upper quantile of the relative error of
the scaled estimate. A larger level gives tighter bounds, fewer dimensions
and more wrongly pruned candidates.
"""

import numpy as np

from dade import SyntheticConfig, apply_transform, calibrate, fit_pca, generate_synthetic, validate_calibration

data, _ = generate_synthetic(SyntheticConfig(n=6000, n_queries=1, dim=64, decay=1.0, seed=3))
pca = fit_pca(data)
x = apply_transform(pca, data)

for p_s in (0.01, 0.05, 0.1, 0.2, 0.4):
    cal = calibrate(pca, x, p_s=p_s, delta_d=8, n_pairs=60_000, seed=0)
    held_out = validate_calibration(cal, pca, x, n_holdout=30_000, seed=7)
    print(f"p_s={p_s:<5} eps={np.round(cal.epsilons, 3)}")
    print(f"         held-out exceedance {np.round(held_out, 3)}")
