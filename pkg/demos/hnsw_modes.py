"""
Coupled and decoupled HNSW search
=================================

In coupled mode the beam threshold is the ef-th best distance. In decoupled
mode the estimator is asked about the K-th best instead, and candidates that
fail still enter the beam under their estimated distance.
"""

from dade import (DADE, FDScanning, SyntheticConfig, apply_transform, build_hnsw, calibrate,
                  compute_ground_truth, fit_pca, generate_synthetic, recall, search_hnsw)

data, queries = generate_synthetic(SyntheticConfig(n=3000, n_queries=20, dim=64, decay=1.0, seed=5))
truth = compute_ground_truth(data, queries, 10)

pca = fit_pca(data)
x, q = apply_transform(pca, data), apply_transform(pca, queries)
cal = calibrate(pca, x, p_s=0.1, delta_d=16)
graph = build_hnsw(x, m=16, ef_construction=100, seed=0)
print("levels:", graph.max_level + 1, "entry point:", graph.entry_point)

for ef in (20, 50, 100):
    for label, strategy, decoupled in (("fd", FDScanning(), False),
                                       ("dade coupled", DADE(pca, cal), False),
                                       ("dade decoupled", DADE(pca, cal), True)):
        results = [search_hnsw(graph, v, 10, ef, strategy, decoupled=decoupled) for v in q]
        stats = results[0].stats
        for res in results[1:]:
            stats.merge(res.stats)
        print(f"ef={ef:<4} {label:<15} recall={recall([r.ids for r in results], truth.ids):.3f}"
              f"  dims={stats.dimension_fraction(64):.3f}")
