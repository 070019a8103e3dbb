"""
How much of a distance lives in the first few PCA components
=============================================================

Fit a PCA rotation on anisotropic data, check that it preserves distances,
and look at the share of variance held by each prefix of components.
"""

import numpy as np

from dade import SyntheticConfig, apply_transform, fit_pca, fit_random_orthogonal, generate_synthetic

data, queries = generate_synthetic(SyntheticConfig(n=5000, n_queries=20, dim=64, decay=1.0, seed=1))
pca = fit_pca(data)
print("orthogonality error:", pca.orthogonality_error())

# distances are unchanged by the rotation
x, q = apply_transform(pca, data), apply_transform(pca, queries)
before = np.linalg.norm(data[:100].astype(np.float64) - queries[0], axis=1)
after = np.linalg.norm(x[:100].astype(np.float64) - q[0], axis=1)
print("max distance change:", np.abs(before - after).max())

share = pca.lambda_prefix / pca.lambda_prefix[-1]
for d in (4, 8, 16, 32, 64):
    print(f"first {d:2d} components hold {share[d]:.3f} of the variance")

# a random rotation spreads the variance evenly instead
rand = fit_random_orthogonal(64, seed=0, data=data)
xr = apply_transform(rand, data).astype(np.float64)
var = xr.var(axis=0)
print("random rotation, first 8 of 64 dims hold", round(var[:8].sum() / var.sum(), 3))
