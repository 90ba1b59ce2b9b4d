"""
Re-deriving the optimal-quantile constants
==========================================

For a given alpha, scans the quantile q for the smallest variance factor,
then reads W at that q off a large sorted sample of |S(alpha, 1, 1)|, and
compares both with the tabulated row.
"""

from ccsketch.tables import build_empirical, derive_qstar, derive_wq, lookup

for alpha in (0.5, 0.95, 1.5):
    q_star, v = derive_qstar(alpha)
    dist = build_empirical(alpha, n=2 * 10**6)
    row = lookup(alpha)
    print(f"alpha={alpha}: q* {q_star:.3f} (table {row.q_star}), V {v:.4g} (table {row.var_factor:.4g}), "
          f"W at table q* {derive_wq(dist, row.q_star):.5g} (table {row.w_qstar})")

# the alpha = 0.95 row's W is ten times what the sample gives
