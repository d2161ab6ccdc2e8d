"""The pretrained, accuracy-only classifier that debiasing starts from."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .netcore import bce_with_logits, sigmoid


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float = 0.0
    clamp_eps: float = 1e-6

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        self.b = float(self.b)
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise ValueError("non-finite parameters")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")

    def decision(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.w.shape[0]:
            raise ValueError(f"dimension mismatch: X has {np.shape(X)[-1]} columns, model expects {self.w.shape[0]}")
        return X @ self.w + self.b

    def predict_proba(self, X):
        return sigmoid(self.decision(X))

    def logits(self, X):
        return proba_to_logit(self.predict_proba(X), self.clamp_eps)

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(int)

    def to_dict(self):
        return {"w": self.w.tolist(), "b": self.b, "clamp_eps": self.clamp_eps}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["w"]), d["b"], d.get("clamp_eps", 1e-6))


def proba_to_logit(p, clamp_eps=1e-6):
    """logit of ``p`` after clamping into [eps, 1 - eps]; always finite."""
    p = np.clip(np.asarray(p, dtype=float), clamp_eps, 1.0 - clamp_eps)
    return np.log(p) - np.log1p(-p)


def train_logreg(train, epochs=2000, lr=0.5, seed=0, clamp_eps=1e-6, return_history=False):
    """Full-batch gradient descent on mean binary cross-entropy.

    Weights start at zero so the result does not actually depend on
    ``seed``; it is accepted for interface symmetry with the other trainers.
    """
    X, y = train.X, train.y
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    w = np.zeros(X.shape[1])
    b = 0.0
    history = []
    for epoch in range(epochs):
        z = X @ w + b
        loss, dz = bce_with_logits(z, y)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged; last finite epoch {epoch - 1}")
        history.append(loss)
        w -= lr * (X.T @ dz)
        b -= lr * float(dz.sum())
    model = LogisticModel(w, b, clamp_eps)
    return (model, history) if return_history else model


def load_scores(path, index):
    """Read a (row_index, probability) CSV and return probabilities for ``index``.

    This lets any external model stand in for the logistic base model.
    """
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:2]] != ["row_index", "probability"]:
            raise ValueError("scores file must have header 'row_index,probability'")
        for row in reader:
            if row:
                table[int(row[0])] = float(row[1])
    try:
        p = np.array([table[int(i)] for i in index], dtype=float)
    except KeyError as exc:
        raise KeyError(f"scores file has no row {exc.args[0]}") from None
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def write_scores(path, index, proba):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_index", "probability"])
        for i, p in zip(index, proba):
            w.writerow([int(i), repr(float(p))])
