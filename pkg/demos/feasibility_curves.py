"""
Recall against dimensions on a linear scan
==========================================

Every strategy scans the whole base set, so only the comparison itself
differs. Prints the sweep as CSV.
"""

import sys

from dade import SyntheticConfig, generate_synthetic
from dade.bench import Workspace, run_feasibility, write_csv

data, queries = generate_synthetic(SyntheticConfig(n=3000, n_queries=20, dim=64, decay=1.0, seed=6))
ws = Workspace(data, queries, n_pairs=50_000)

rows = run_feasibility(ws, p_s_grid=(0.05, 0.1, 0.2), eps0_grid=(1.0, 2.1), d_fixed_grid=(8, 16, 32),
                       delta_d=(16,), timing=False)
write_csv(rows, sys.stdout, timing=False)
