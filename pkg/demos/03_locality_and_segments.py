"""Are the changes local? Fit shallow trees on the changed-row labels.

Run: python demos/03_locality_and_segments.py
"""
from commod import CommodConfig, SplitSpec, make_synthetic, split, train_advdebias_baseline, train_commod, train_logreg
from commod import interp_eval, metrics

ds = make_synthetic(4000, seed=0)
train, test = split(ds, SplitSpec(0.7, seed=1))
base = train_logreg(train)
f = base.logits(test.X)
yf = (f > 0).astype(int)

commod = train_commod(train, base, CommodConfig(lambda_fair=4.0, lambda_ratio=0.05, lr_gen=0.002, epochs=150, seed=1))
adv = train_advdebias_baseline(train, CommodConfig(lambda_fair=4.0, lr_gen=0.003, epochs=100, seed=1))
models = [("commod", yf, commod.predict(test.X, f)), ("advdebias", yf, adv.predict(test.X))]
for name, _, yg in models:
    print(f"{name:10s} P-Rule {metrics.p_rule(yg, test.s):.3f} acc {metrics.accuracy(yg, test.y):.3f} "
          f"changes {metrics.change_proportion(yf, yg):.3f}")

print("\ndepth  " + "  ".join(f"{n:>10s}" for n, *_ in models))
rows = interp_eval.locality_curve(models, test.X, depths=range(1, 7), seeds=5)
for depth in range(1, 7):
    vals = [r for r in rows if r["depth"] == depth]
    print(f"{depth:5d}  " + "  ".join(f"{r['mean_f1']:10.3f}" for r in vals))

# Where does a run fall on the reference quartile grids?
grids = interp_eval.default_grids()
print("\nLaw School DP grid, (0.60, 0.70) ->", interp_eval.segment_assign(0.60, 0.70, grids["law_dp"]))
print("Law School EO grid, (0.10, 0.76) ->", interp_eval.segment_assign(0.10, 0.76, grids["law_eo"]))

# A post-hoc tree surrogate of the correction loses fairness when shallow.
for row in interp_eval.posthoc_compare(commod, test.X, f, test.s, depths=(1, 2, 4, None)):
    print(f"tree depth {str(row['depth']):>4}: surrogate P-Rule {row['p_rule_tree']:.3f}, "
          f"self-explainable {row['p_rule_self']:.3f}")
