"""Built-in biased tabular dataset so every pipeline runs without external files."""
from __future__ import annotations

import numpy as np

from .tabular import RawTable, Schema, preprocess

SCHEMA = Schema(label="label", sensitive="group", positive_label=1.0)


def synthetic_raw(n=4000, seed=0, minority=0.3, base_rates=(0.5, 0.4), shift=4.0,
                  proxy_noise=1.5, n_noise=4) -> RawTable:
    """Two Gaussian clusters per class; one cluster is shifted for the minority.

    ``score_a`` separates the classes and ``score_b`` separates the two
    clusters within each class. Minority rows of cluster 1 have ``score_a``
    lowered by ``shift``, which pushes many of their positives below a
    single linear boundary. ``proxy`` is a noisy copy of the group;
    ``noise*`` and ``region`` carry no signal.
    """
    rng = np.random.default_rng(seed)
    g = (rng.uniform(size=n) < minority).astype(int)
    y = (rng.uniform(size=n) < np.where(g == 1, base_rates[1], base_rates[0])).astype(int)
    cluster = rng.integers(0, 2, size=n)
    score_a = (2 * y - 1) * 1.2 - shift * g * cluster + rng.normal(0, 1.0, n)
    score_b = (2 * cluster - 1) * 1.0 + rng.normal(0, 0.7, n)
    proxy = g + rng.normal(0, proxy_noise, n)
    noise = rng.normal(0, 1.0, (n, n_noise))
    region = rng.choice(["north", "south", "west"], size=n)
    names = ["score_a", "score_b", "proxy", *[f"noise{j}" for j in range(n_noise)],
             "region", "group", "label"]
    rows = [(float(score_a[i]), float(score_b[i]), float(proxy[i]), *map(float, noise[i]),
             str(region[i]), "B" if g[i] else "A", float(y[i])) for i in range(n)]
    return RawTable(names, rows)


def make_synthetic(n=4000, seed=0, **kw):
    return preprocess(synthetic_raw(n, seed, **kw), SCHEMA)
