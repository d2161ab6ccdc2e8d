"""Fairness, accuracy, change and concept-structure metrics."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np


def _binary(a, name):
    a = np.asarray(a).astype(int).reshape(-1)
    if not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    return a


@dataclass
class PredictionTable:
    y: np.ndarray
    s: np.ndarray
    yhat_f: np.ndarray
    yhat_g: np.ndarray
    score_f: np.ndarray | None = None
    score_g: np.ndarray | None = None

    def __post_init__(self):
        for name in ("y", "s", "yhat_f", "yhat_g"):
            setattr(self, name, _binary(getattr(self, name), name))
        n = len(self.y)
        if not all(len(getattr(self, k)) == n for k in ("s", "yhat_f", "yhat_g")):
            raise ValueError("columns differ in length")
        for score, hard in (("score_f", "yhat_f"), ("score_g", "yhat_g")):
            val = getattr(self, score)
            if val is None:
                continue
            val = np.asarray(val, dtype=float)
            if len(val) != n:
                raise ValueError(f"{score} has the wrong length")
            if not np.array_equal((val > 0.5).astype(int), getattr(self, hard)):
                raise ValueError(f"{hard} is not the 0.5-threshold of {score}")
            setattr(self, score, val)

    @classmethod
    def from_scores(cls, y, s, score_f, score_g):
        score_f = np.asarray(score_f, dtype=float)
        score_g = np.asarray(score_g, dtype=float)
        return cls(y, s, (score_f > 0.5).astype(int), (score_g > 0.5).astype(int), score_f, score_g)


def positive_rates(yhat, s):
    yhat, s = _binary(yhat, "yhat"), _binary(s, "s")
    if not ((s == 0).any() and (s == 1).any()):
        raise ValueError("both sensitive groups must be present")
    return float(yhat[s == 1].mean()), float(yhat[s == 0].mean())


def p_rule(yhat, s) -> float:
    """min of the two ratios of group positive rates.

    Both rates zero counts as perfectly fair (1.0); a single zero rate as 0.0.
    """
    r1, r0 = positive_rates(yhat, s)
    if r1 == 0.0 and r0 == 0.0:
        return 1.0
    if r1 == 0.0 or r0 == 0.0:
        return 0.0
    return min(r1 / r0, r0 / r1)


def _rate(yhat, mask, label):
    if not mask.any():
        warnings.warn(f"empty cell when computing a group rate ({label}); using 0")
        return 0.0
    return float(yhat[mask].mean())


def disparate_mistreatment(yhat, y, s):
    """Return ``(delta_tpr, delta_fpr, dm)`` with ``dm = delta_tpr + delta_fpr``."""
    yhat, y, s = _binary(yhat, "yhat"), _binary(y, "y"), _binary(s, "s")
    tpr = [_rate(yhat, (s == g) & (y == 1), f"s={g}, y=1") for g in (0, 1)]
    fpr = [_rate(yhat, (s == g) & (y == 0), f"s={g}, y=0") for g in (0, 1)]
    d_tpr, d_fpr = abs(tpr[1] - tpr[0]), abs(fpr[1] - fpr[0])
    return d_tpr, d_fpr, d_tpr + d_fpr


def accuracy(yhat, y) -> float:
    return float(np.mean(_binary(yhat, "yhat") == _binary(y, "y")))


def change_proportion(yhat_f, yhat_g) -> float:
    a, b = _binary(yhat_f, "yhat_f"), _binary(yhat_g, "yhat_g")
    if len(a) != len(b):
        raise ValueError("prediction arrays differ in length")
    return float(np.mean(a != b))


@dataclass
class FairnessReport:
    p_rule: float
    dm: float
    delta_tpr: float
    delta_fpr: float
    accuracy: float
    change_proportion: float

    @classmethod
    def from_predictions(cls, yhat, y, s, yhat_ref=None):
        d_tpr, d_fpr, dm = disparate_mistreatment(yhat, y, s)
        changes = 0.0 if yhat_ref is None else change_proportion(yhat_ref, yhat)
        return cls(p_rule(yhat, s), dm, d_tpr, d_fpr, accuracy(yhat, y), changes)

    @classmethod
    def from_table(cls, table: PredictionTable):
        return cls.from_predictions(table.yhat_g, table.y, table.s, table.yhat_f)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def calibration_table(score_f, score_g, bins=10):
    """Equal-width bins on ``score_f`` over [0, 1].

    Returns a list of dicts ``{lo, hi, mean_f, mean_g, count}``; empty bins
    have ``count == 0`` and NaN means.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    score_f = np.asarray(score_f, dtype=float)
    score_g = np.asarray(score_g, dtype=float)
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.digitize(score_f, edges[1:-1], right=False), 0, bins - 1)
    rows = []
    for b in range(bins):
        m = idx == b
        cnt = int(m.sum())
        rows.append({"lo": float(edges[b]), "hi": float(edges[b + 1]),
                     "mean_f": float(score_f[m].mean()) if cnt else float("nan"),
                     "mean_g": float(score_g[m].mean()) if cnt else float("nan"),
                     "count": cnt})
    return rows


def write_csv(rows, path):
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def concept_sparsity(W, eps=0.01):
    """``(active_count, sparsity_fraction)``: entries above ``eps`` and 1 - active/size."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    W = np.asarray(W, dtype=float)
    active = int(np.sum(np.abs(W) > eps))
    return active, 1.0 - active / W.size


def _signed_support(w, eps):
    w = np.asarray(w, dtype=float)
    return {(j, int(np.sign(v))) for j, v in enumerate(w) if abs(v) > eps}


def concept_jaccard(Wi, Wj, eps=0.01) -> float:
    """Jaccard index of the signed supports ``{(feature, sign)}`` of two concept rows."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    a, b = _signed_support(Wi, eps), _signed_support(Wj, eps)
    if not a and not b:
        warnings.warn("both concept rows are empty at this threshold")
        return 0.0
    return len(a & b) / len(a | b)


def max_abs_cosine(W) -> float:
    """Largest |cosine similarity| over pairs of rows (0 when k == 1)."""
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=1)
    best = 0.0
    for i in range(len(W)):
        for j in range(i + 1, len(W)):
            if norms[i] > 0 and norms[j] > 0:
                best = max(best, abs(float(W[i] @ W[j] / (norms[i] * norms[j]))))
    return best


def ols_fit(X, y, names=None):
    """Least squares with an intercept; returns ``(coefficients, r_squared)``.

    ``coefficients[0]`` is the intercept. Constant ``y`` gives R² = 1 when
    the residuals vanish and 0 otherwise.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p + 1:
        raise ValueError("need more rows than coefficients")
    A = np.column_stack([np.ones(n), X])
    rank = np.linalg.matrix_rank(A)
    if rank < A.shape[1]:
        names = names or [f"x{j}" for j in range(p)]
        bad = [names[j] for j in range(p)
               if np.linalg.matrix_rank(np.delete(A, j + 1, axis=1)) == rank]
        raise np.linalg.LinAlgError(
            "design matrix is rank-deficient (collinear or constant columns: "
            + ", ".join(bad) + ")")
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return coef, r2
