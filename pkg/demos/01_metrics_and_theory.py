"""Fairness metrics and the exact flip-budget results on tiny tables.

Run: python demos/01_metrics_and_theory.py
"""
from fractions import Fraction

import numpy as np

from commod import metrics, theory

# A toy classifier: group s=1 gets fewer positive predictions.
y = np.array([1, 1, 0, 0, 1, 0, 1, 0])
s = np.array([1, 1, 1, 1, 0, 0, 0, 0])
yhat = np.array([1, 0, 0, 0, 1, 1, 1, 0])

print("P-Rule:", metrics.p_rule(yhat, s))
d_tpr, d_fpr, dm = metrics.disparate_mistreatment(yhat, y, s)
print(f"TPR gap {d_tpr:.2f}, FPR gap {d_fpr:.2f}, DM {dm:.2f}")

# How far can K flips move the P-Rule? Spend them all on one side.
table = theory.FlipTable.from_predictions(yhat, s)
k_s, _ = theory.switching_point(table)
print(f"\nswitching point K_s = {k_s}")
for K in range(k_s):
    best, alloc = theory.max_prule_k_flips(table, K)
    brute = theory.brute_force_prule_subsets(yhat, s, K)
    print(f"K={K}: extreme ({alloc['extreme']}) gives {alloc['p_rule_exact']}, brute force {brute}")

# Disparate Mistreatment under the per-flip model: which endpoint wins?
n_sy = {(0, 1): 10, (1, 1): 10, (0, 0): 2, (1, 0): 4}
res = theory.min_dm_k_flips(n_sy, (Fraction(2, 5), Fraction(3, 5)), K=3)
print(f"\nDM model: gamma={res.gamma}, delta={res.delta}, best x={res.x_opt}, curve={[str(c) for c in res.curve]}")

# The change-rate identity holds on any pair of prediction vectors.
rng = np.random.default_rng(0)
tab = metrics.PredictionTable(y, s, yhat, rng.integers(0, 2, 8))
print("\nchange identity (lhs, rhs, equal):", theory.verify_change_identity(tab))

# Bayes-optimal rule on a finite law vs exhaustive search.
dist = theory.FiniteDistribution.random(8, rng)
costs = theory.CostSpec(0.4, 0.5, 0.5, lambda_fair=1.2, lambda_ratio=0.3)
g = theory.boc(dist, costs)
best, _ = theory.exhaustive_min_risk(dist, costs)
print(f"\nBOC risk {theory.lagrangian_risk(g, dist, costs):.6f}, exhaustive minimum {best:.6f}")
