"""
A single distance comparison, step by step
==========================================

Compare one query against one vector under exact scanning, random-rotation
sampling and the data-aware estimator, and print how many dimensions each
needed before it could decide.
"""

import numpy as np

from dade import (SyntheticConfig, apply_transform, adsampling_dco, calibrate, dade_dco, fd_scanning_dco,
                  fit_pca, fit_random_orthogonal, generate_synthetic)

data, queries = generate_synthetic(SyntheticConfig(n=4000, n_queries=5, dim=128, decay=1.0, seed=2))
pca = fit_pca(data)
x, q = apply_transform(pca, data), apply_transform(pca, queries)
cal = calibrate(pca, x, p_s=0.1, delta_d=16, n_pairs=50_000)
print("checkpoints:", cal.checkpoints)
print("epsilons:   ", np.round(cal.epsilons, 3))

rand = fit_random_orthogonal(128, seed=0, data=data)
xr, qr = apply_transform(rand, data), apply_transform(rand, queries)

dist = np.linalg.norm(x.astype(np.float64) - q[0], axis=1)
near, far = int(np.argmin(dist)), int(np.argmax(dist))
r = float(np.quantile(dist, 0.01))
print(f"threshold r = {r:.3f}")

for label, i in (("near", near), ("far", far)):
    print(f"\n{label} vector, true distance {dist[i]:.3f}")
    print("  fd:  ", fd_scanning_dco(x[i], q[0], r))
    print("  ads: ", adsampling_dco(xr[i], qr[0], r, delta_d=16))
    print("  dade:", dade_dco(x[i], q[0], r, pca, cal, delta_d=16))
