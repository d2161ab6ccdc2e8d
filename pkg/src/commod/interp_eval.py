"""How interpretable are the changes a debiaser makes?

Depth-limited trees on change labels (locality), quartile segmentation of
the fairness/accuracy plane, and a post-hoc surrogate comparison.
"""
from __future__ import annotations

import bisect
import csv
import json
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import metrics

# --------------------------------------------------------------------------
# trees


@dataclass
class TreeNode:
    """Internal node when ``feature`` is set; leaf otherwise.

    ``counts`` holds ``(n_neg, n_pos)`` for classification leaves and
    ``(n,)`` for regression leaves; ``value`` is the leaf prediction.
    """

    value: float
    counts: tuple
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.feature is None


@dataclass
class DecisionTree:
    root: TreeNode
    max_depth: int | None
    kind: str = "classification"

    def depth(self):
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def predict_value(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X))
        self._fill(self.root, X, np.arange(len(X)), out)
        return out

    def _fill(self, node, X, rows, out):
        if node.is_leaf:
            out[rows] = node.value
            return
        go_left = X[rows, node.feature] <= node.threshold
        self._fill(node.left, X, rows[go_left], out)
        self._fill(node.right, X, rows[~go_left], out)

    def predict(self, X):
        if self.kind != "classification":
            return self.predict_value(X)
        return (self.predict_value(X) > 0.5).astype(int)


def _best_split(X, y, kind, order):
    """Best (gain, feature, threshold) over midpoints of sorted unique values.

    Features are scanned in ``order``; a later feature wins only with a
    strictly larger gain, so ``order`` decides ties. Like common CART
    implementations, an impure node is split even when the best gain is 0.
    """
    n = len(y)
    if kind == "classification":
        parent = 1.0 - (y.mean() ** 2 + (1 - y.mean()) ** 2)
    else:
        parent = float(y.var())
    best = (-np.inf, None, None)
    for j in order:
        idx = np.argsort(X[:, j], kind="stable")
        xs, ys = X[idx, j], y[idx]
        valid = np.nonzero(xs[1:] > xs[:-1])[0]  # split after position i
        if len(valid) == 0:
            continue
        nl = valid + 1.0
        nr = n - nl
        cl = np.cumsum(ys)[valid]
        if kind == "classification":
            pl, pr = cl / nl, (ys.sum() - cl) / nr
            child = (nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)) / n
        else:
            sq = np.cumsum(ys ** 2)[valid]
            tot, tot_sq = ys.sum(), float((ys ** 2).sum())
            var_l = sq / nl - (cl / nl) ** 2
            var_r = (tot_sq - sq) / nr - ((tot - cl) / nr) ** 2
            child = (nl * var_l + nr * var_r) / n
        gains = parent - child
        i = int(np.argmax(gains))
        if gains[i] > best[0] + 1e-12:
            k = valid[i]
            best = (float(gains[i]), int(j), float((xs[k] + xs[k + 1]) / 2))
    return best


def _grow(X, y, depth, max_depth, kind, rng):
    if kind == "classification":
        n_pos = int(y.sum())
        node = TreeNode(value=n_pos / len(y), counts=(len(y) - n_pos, n_pos))
        pure = n_pos in (0, len(y))
    else:
        node = TreeNode(value=float(y.mean()), counts=(len(y),))
        pure = bool(np.all(y == y[0]))
    if pure or len(y) < 2 or (max_depth is not None and depth >= max_depth):
        return node
    order = np.arange(X.shape[1]) if rng is None else rng.permutation(X.shape[1])
    _, j, thr = _best_split(X, y, kind, order)
    if j is None:
        return node
    mask = X[:, j] <= thr
    node.feature, node.threshold = j, thr
    node.left = _grow(X[mask], y[mask], depth + 1, max_depth, kind, rng)
    node.right = _grow(X[~mask], y[~mask], depth + 1, max_depth, kind, rng)
    return node


def fit_tree(X, labels, max_depth=3, seed=None) -> DecisionTree:
    """Greedy Gini tree; ``max_depth=None`` grows until leaves are pure.

    ``seed`` only shuffles the order in which features are scanned, which
    decides between splits of exactly equal gain.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels).astype(int).reshape(-1)
    if len(y) < 2 or X.shape[0] != len(y):
        raise ValueError("need at least 2 rows and matching labels")
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    rng = None if seed is None else np.random.default_rng(seed)
    return DecisionTree(_grow(X, y.astype(float), 0, max_depth, "classification", rng), max_depth)


def fit_regression_tree(X, target, max_depth=3, seed=None) -> DecisionTree:
    """Variance-reduction tree for a real-valued target."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(target, dtype=float).reshape(-1)
    if len(t) < 2 or X.shape[0] != len(t):
        raise ValueError("need at least 2 rows and a matching target")
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    rng = None if seed is None else np.random.default_rng(seed)
    return DecisionTree(_grow(X, t, 0, max_depth, "regression", rng), max_depth, "regression")


def f1_score(pred, labels) -> float:
    """F1 of the positive class; 1.0 when neither side has any positives."""
    pred = np.asarray(pred).astype(int)
    labels = np.asarray(labels).astype(int)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def tree_f1(tree: DecisionTree, X, labels) -> float:
    return f1_score(tree.predict(X), labels)


def locality_curve(models, X, depths=(1, 2, 3, 4, 5, 6), seeds=5, bootstrap=True):
    """F1 of depth-limited trees predicting which rows each model changed.

    ``models`` is a list of ``(name, yhat_f, yhat_g)``. For each seed the
    tree is fit on a bootstrap resample (when ``bootstrap``) with a
    seed-dependent feature order, then scored on all rows. Matching the
    models' fairness/accuracy is left to the caller.
    """
    X = np.asarray(X, dtype=float)
    rows = []
    for name, yhat_f, yhat_g in models:
        labels = (np.asarray(yhat_f).astype(int) != np.asarray(yhat_g).astype(int)).astype(int)
        degenerate = not labels.any()
        for depth in depths:
            scores = []
            for seed in range(seeds):
                rng = np.random.default_rng(seed)
                idx = rng.integers(0, len(labels), len(labels)) if bootstrap else np.arange(len(labels))
                tree = fit_tree(X[idx], labels[idx], depth, seed=seed)
                scores.append(tree_f1(tree, X, labels))
            rows.append({"model": name, "depth": depth, "mean_f1": float(np.mean(scores)),
                         "std_f1": float(np.std(scores)), "n_changes": int(labels.sum()),
                         "degenerate": degenerate})
    return rows


def write_locality_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "depth", "mean_f1", "std_f1"])
        for r in rows:
            w.writerow([r["model"], r["depth"], repr(r["mean_f1"]), repr(r["std_f1"])])


# --------------------------------------------------------------------------
# quartile segments

ORIENTATIONS = ("higher_fair_better", "lower_fair_better")


@dataclass
class SegmentGrid:
    """Three inner edges per axis splitting it into Q1..Q4 (Q4 is best).

    ``*_closed`` says which end of each interval is closed: ``"lower"`` for
    ``[a, b)`` brackets, ``"upper"`` for ``(a, b]``.
    """

    fairness_edges: list
    accuracy_edges: list
    orientation: str = "higher_fair_better"
    fairness_closed: str = "lower"
    accuracy_closed: str = "lower"
    name: str = ""

    def __post_init__(self):
        for edges in (self.fairness_edges, self.accuracy_edges):
            if len(edges) != 3 or not all(a < b for a, b in zip(edges, edges[1:])):
                raise ValueError("need 3 strictly increasing edges per axis")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if {self.fairness_closed, self.accuracy_closed} - {"lower", "upper"}:
            raise ValueError("closed side must be 'lower' or 'upper'")
        self.fairness_edges = [float(e) for e in self.fairness_edges]
        self.accuracy_edges = [float(e) for e in self.accuracy_edges]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _bin(value, edges, closed):
    find = bisect.bisect_right if closed == "lower" else bisect.bisect_left
    return find(edges, value)


def segment_assign(fairness, accuracy, grid: SegmentGrid):
    """Return ``(fair_quartile, acc_quartile)``, each in 1..4."""
    fb = _bin(fairness, grid.fairness_edges, grid.fairness_closed)
    fq = fb + 1 if grid.orientation == "higher_fair_better" else 4 - fb
    aq = _bin(accuracy, grid.accuracy_edges, grid.accuracy_closed) + 1
    return fq, aq


def default_grids() -> dict:
    """Reference grids shipped with the package, keyed by name."""
    text = resources.files("commod").joinpath("data/segment_grids.json").read_text()
    return {name: SegmentGrid(**d, name=name) for name, d in json.loads(text).items()}


def grid_from_results(fairness, accuracy, orientation="higher_fair_better") -> SegmentGrid:
    """Quartile edges computed from any sweep's results."""
    fe = np.quantile(np.asarray(fairness, dtype=float), [0.25, 0.5, 0.75])
    ae = np.quantile(np.asarray(accuracy, dtype=float), [0.25, 0.5, 0.75])
    fe, ae = _spread(fe), _spread(ae)
    closed = "lower" if orientation == "higher_fair_better" else "upper"
    return SegmentGrid(fe.tolist(), ae.tolist(), orientation, closed, "lower", "from_results")


def _spread(edges):
    # ties in the data would give equal quartiles; nudge so edges stay increasing
    edges = np.array(edges, dtype=float)
    for i in range(1, 3):
        if edges[i] <= edges[i - 1]:
            edges[i] = np.nextafter(edges[i - 1], np.inf)
    return edges


# --------------------------------------------------------------------------
# post-hoc surrogate vs self-explainable


def posthoc_compare(trained, X, f_logit, s, depths=(1, 2, 3, 4, None), signal=None,
                    kind="ratio", seed=None):
    """Approximate a debiaser's correction with regression trees.

    ``signal`` defaults to the ratio deviation ``r - 1`` of ``trained``.
    With ``kind="ratio"`` predictions are rebuilt as ``(1 + tree) * f_logit``;
    with ``kind="additive"`` as ``f_logit + tree``. Returns one dict per
    depth with the surrogate's P-Rule next to the self-explainable model's
    (which never depends on depth) and the base model's.
    """
    if kind not in ("ratio", "additive"):
        raise ValueError("kind must be 'ratio' or 'additive'")
    X = np.asarray(X, dtype=float)
    f_logit = np.asarray(f_logit, dtype=float)
    if signal is None:
        if kind != "ratio":
            raise ValueError("an additive comparison needs an explicit signal")
        signal = trained.ratio(X, f_logit) - 1.0
    signal = np.asarray(signal, dtype=float)
    p_self = metrics.p_rule(trained.predict(X, f_logit), s)
    p_base = metrics.p_rule((f_logit > 0).astype(int), s)
    out = []
    for depth in depths:
        approx = fit_regression_tree(X, signal, depth, seed).predict_value(X)
        z = (1.0 + approx) * f_logit if kind == "ratio" else f_logit + approx
        out.append({"depth": depth, "p_rule_tree": metrics.p_rule((z > 0).astype(int), s),
                    "p_rule_self": p_self, "p_rule_base": p_base})
    return out
