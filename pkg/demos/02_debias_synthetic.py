"""Debias a logistic model on the built-in synthetic data and inspect the concepts.

Run: python demos/02_debias_synthetic.py
"""
import numpy as np

from commod import (CommodConfig, FairnessReport, SplitSpec, explain, make_synthetic, split,
                    train_advdebias_baseline, train_commod, train_logreg)

ds = make_synthetic(4000, seed=0)
train, test = split(ds, SplitSpec(0.7, seed=0))
base = train_logreg(train)
f_test = base.logits(test.X)
yhat_f = (f_test > 0).astype(int)
print("base model     ", FairnessReport.from_predictions(yhat_f, test.y, test.s))

# Stronger adversary weight buys more fairness with a few more flips.
for lam in (2.0, 4.0, 8.0):
    cfg = CommodConfig(k=2, lambda_fair=lam, lambda_ratio=0.05, lr_gen=0.002, epochs=150, seed=0)
    model = train_commod(train, base, cfg)
    rep = FairnessReport.from_predictions(model.predict(test.X, f_test), test.y, test.s, yhat_f)
    print(f"COMMOD  l={lam:<4}", f"P-Rule {rep.p_rule:.3f} acc {rep.accuracy:.3f} changes {rep.change_proportion:.3f}")

# Same adversary, but a fresh network trained from scratch.
adv = train_advdebias_baseline(train, CommodConfig(lambda_fair=4.0, lr_gen=0.003, epochs=100, seed=0))
rep = FairnessReport.from_predictions(adv.predict(test.X), test.y, test.s, yhat_f)
print("AdvDebias l=4.0", f"P-Rule {rep.p_rule:.3f} acc {rep.accuracy:.3f} changes {rep.change_proportion:.3f}")

# Sparse, non-redundant concepts are easier to read.
cfg = CommodConfig(k=2, lambda_fair=4.0, lambda_ratio=0.05, lambda_sparsity=0.1, lambda_diversity=0.1,
                   lr_gen=0.002, epochs=150, seed=0)
model = train_commod(train, base, cfg)
for concept in explain(model.ratio_net, train.feature_names):
    feats = ", ".join(f"{n} {w:+.2f}" for n, w in concept["features"][:4])
    print(f"concept {concept['concept']} (v={concept['head_weight']:+.2f}, {concept['direction']}): {feats}")

r = model.ratio(test.X)
print(f"\nflipped rows: {np.mean(r < 0):.3f} of the test set have a negative ratio")
