"""Minimal, interpretable debiasing of a pretrained classifier.

The debiased score is ``g(x) = sigmoid(r(x) * f_logit(x))`` where ``r`` is a
two-stage linear map (features -> k concepts -> scalar ratio). A label
changes exactly where ``r(x) < 0``. ``r`` is trained against an adversary
that tries to recover the sensitive attribute from the updated logit.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import metrics
from .netcore import DenseNet, backward, bce_with_logits, forward, init_dense, make_optimizer, sigmoid

MODES = ("DP", "EO")
DIVERSITY_KINDS = ("abs_cosine", "cosine_distance")


@dataclass
class CommodConfig:
    k: int = 2
    lambda_fair: float = 1.0
    lambda_ratio: float = 0.1
    lambda_sparsity: float = 0.0
    lambda_diversity: float = 0.0
    fairness_mode: str = "DP"
    epochs: int = 60
    batch_size: int = 128
    adv_steps_per_gen_step: int = 1
    adv_warmup_epochs: int = 5
    lr_gen: float = 1e-2
    lr_adv: float = 1e-2
    seed: int = 0
    include_flogit_input: bool = False
    diversity: str = "abs_cosine"
    optimizer: str = "adam"
    adv_hidden: int = 32

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        for name in ("lambda_fair", "lambda_ratio", "lambda_sparsity", "lambda_diversity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.fairness_mode not in MODES:
            raise ValueError(f"fairness_mode must be one of {MODES}")
        if self.diversity not in DIVERSITY_KINDS:
            raise ValueError(f"diversity must be one of {DIVERSITY_KINDS}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **kw):
        return CommodConfig(**{**asdict(self), **kw})


@dataclass
class ConceptRatioNet:
    """``r(x) = v . (W x) + v_bias``; no nonlinearity anywhere."""

    W: np.ndarray
    v: np.ndarray
    v_bias: float = 1.0
    include_flogit_input: bool = False

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        self.v_bias = np.asarray(self.v_bias, dtype=float).reshape(())
        if self.W.ndim != 2 or self.W.shape[0] != self.v.shape[0] or self.W.shape[0] < 1:
            raise ValueError("W must be k x d with k == len(v) >= 1")

    @property
    def k(self):
        return self.W.shape[0]

    def params(self):
        return [self.W, self.v, self.v_bias]

    def inputs(self, X, f_logit=None):
        X = np.asarray(X, dtype=float)
        if self.include_flogit_input:
            if f_logit is None:
                raise ValueError("this ratio net also needs f_logit as input")
            X = np.column_stack([X, f_logit])
        if X.shape[-1] != self.W.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[-1]} inputs, net expects {self.W.shape[1]}")
        return X

    def concepts(self, X, f_logit=None):
        return self.inputs(X, f_logit) @ self.W.T

    def to_dict(self):
        return {"W": self.W.tolist(), "v": self.v.tolist(), "v_bias": float(self.v_bias),
                "include_flogit_input": self.include_flogit_input}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["W"]), np.array(d["v"]), d["v_bias"], d.get("include_flogit_input", False))


def init_ratio_net(d, k, rng, include_flogit_input=False) -> ConceptRatioNet:
    """Small random concepts, zero head, unit bias: starts exactly at g = f."""
    width = d + int(include_flogit_input)
    return ConceptRatioNet(rng.uniform(-1e-2, 1e-2, size=(k, width)), np.zeros(k), 1.0,
                           include_flogit_input)


def ratio(net: ConceptRatioNet, X, f_logit=None):
    """Ratio for a row or a matrix of rows."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    fl = None if f_logit is None else np.atleast_1d(f_logit)
    r = net.concepts(X2, fl) @ net.v + net.v_bias
    return float(r[0]) if single else r


def debiased_score(r_val, f_logit):
    return sigmoid(np.asarray(r_val, dtype=float) * np.asarray(f_logit, dtype=float))


@dataclass
class Adversary:
    """Predicts s from the updated logit (DP) or from (logit, y) (EO)."""

    net: DenseNet
    mode: str = "DP"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        want = 1 if self.mode == "DP" else 2
        if self.net.input_dim != want or self.net.output_dim != 1:
            raise ValueError(f"{self.mode} adversary needs input width {want} and one output")

    def features(self, z, y=None):
        z = np.asarray(z, dtype=float).reshape(-1, 1)
        if self.mode == "DP":
            return z
        return np.column_stack([z, np.asarray(y, dtype=float)])

    def logit(self, z, y=None):
        out, _ = forward(self.net, self.features(z, y))
        return out[:, 0]

    def predict_proba(self, z, y=None):
        return sigmoid(self.logit(z, y))

    def loss(self, z, y, s):
        """Mean BCE of the adversary, dL/dparams and dL/dz."""
        out, cache = forward(self.net, self.features(z, y))
        loss, da = bce_with_logits(out[:, 0], s)
        grads, dinp = backward(self.net, cache, da[:, None])
        return loss, grads, dinp[:, 0]

    def to_dict(self):
        return {"mode": self.mode, "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(DenseNet.from_dict(d["net"]), d["mode"])


def init_adversary(mode, rng, hidden=32) -> Adversary:
    width = 1 if mode == "DP" else 2
    return Adversary(init_dense([width, hidden, 1], ["relu", "identity"], rng), mode)


# --------------------------------------------------------------------------
# concept penalties


def sparsity_penalty(W):
    """Mean absolute entry of the concept layer, and its (sub)gradient."""
    return float(np.abs(W).mean()), np.sign(W) / W.size


def diversity_penalty(W, kind="abs_cosine"):
    """Pairwise concept redundancy and its gradient.

    ``abs_cosine`` sums ``|cos(W_i, W_j)|`` over unordered pairs.
    ``cosine_distance`` sums ``1 - cos`` as literally written; minimizing it
    drives concepts together and is kept only for comparison.
    """
    k = W.shape[0]
    norms = np.linalg.norm(W, axis=1)
    total, grad = 0.0, np.zeros_like(W)
    for i in range(k):
        for j in range(i + 1, k):
            if norms[i] == 0 or norms[j] == 0:
                warnings.warn("zero-norm concept row; its cosine terms are treated as 0")
                continue
            cos = float(W[i] @ W[j]) / (norms[i] * norms[j])
            dcos_i = W[j] / (norms[i] * norms[j]) - cos * W[i] / norms[i] ** 2
            dcos_j = W[i] / (norms[i] * norms[j]) - cos * W[j] / norms[j] ** 2
            if kind == "abs_cosine":
                sgn = np.sign(cos)
                total += abs(cos)
                grad[i] += sgn * dcos_i
                grad[j] += sgn * dcos_j
            else:
                total += 1.0 - cos
                grad[i] -= dcos_i
                grad[j] -= dcos_j
    return total, grad


# --------------------------------------------------------------------------
# losses


def loss_components(net, adv, X, y, s, f_logit, cfg: CommodConfig, ratio_weights=None,
                    with_grads=False):
    """All loss terms for one batch; optionally the generator gradients.

    Returns a dict with ``L_Y, L_S, L_ratio, L_sparsity, L_diversity, total``
    and, when ``with_grads``, ``grads`` (for ``net.params()``), ``z`` and
    ``g``. The adversary is held fixed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    f_logit = np.asarray(f_logit, dtype=float)
    if len(y) == 0:
        raise ValueError("empty batch")
    n = len(y)
    inp = net.inputs(X, f_logit)
    C = inp @ net.W.T
    r = C @ net.v + net.v_bias
    z = r * f_logit

    L_Y, dz_y = bce_with_logits(z, y)
    L_S, _, dz_s = adv.loss(z, y, s)
    w = np.ones(n) if ratio_weights is None else np.asarray(ratio_weights, dtype=float)
    L_ratio = float(np.mean(w * (r - 1.0) ** 2))
    L_sp, dW_sp = sparsity_penalty(net.W)
    L_div, dW_div = diversity_penalty(net.W, cfg.diversity)

    total = (L_Y - cfg.lambda_fair * L_S + cfg.lambda_ratio * L_ratio
             + cfg.lambda_sparsity * L_sp + cfg.lambda_diversity * L_div)
    out = {"L_Y": L_Y, "L_S": L_S, "L_ratio": L_ratio, "L_sparsity": L_sp,
           "L_diversity": L_div, "total": total}
    if with_grads:
        dz = dz_y - cfg.lambda_fair * dz_s
        dr = dz * f_logit + cfg.lambda_ratio * 2.0 * w * (r - 1.0) / n
        dv = C.T @ dr
        db = np.asarray(dr.sum())
        dW = np.outer(net.v, dr @ inp) + cfg.lambda_sparsity * dW_sp + cfg.lambda_diversity * dW_div
        out.update(grads=[dW, dv, db], z=z, g=sigmoid(z), r=r)
    return out


@dataclass
class TrainedCommod:
    ratio_net: ConceptRatioNet
    adversary: Adversary
    config: CommodConfig
    history: list = field(default_factory=list)

    def ratio(self, X, f_logit=None):
        return ratio(self.ratio_net, X, f_logit)

    def predict_proba(self, X, f_logit):
        return debiased_score(self.ratio(X, f_logit), f_logit)

    def predict(self, X, f_logit):
        return (self.predict_proba(X, f_logit) > 0.5).astype(int)

    def to_dict(self):
        return {"config": asdict(self.config), "seed": self.config.seed,
                "ratio_net": self.ratio_net.to_dict(), "adversary": self.adversary.to_dict(),
                "history": self.history}

    @classmethod
    def from_dict(cls, d):
        return cls(ConceptRatioNet.from_dict(d["ratio_net"]), Adversary.from_dict(d["adversary"]),
                   CommodConfig.from_dict(d["config"]), d["history"])


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def _adv_update(adv, opt, z, y, s):
    loss, grads, _ = adv.loss(z, y, s)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite adversary loss")
    opt(adv.net.params(), grads)
    return loss


def train_commod(train, base, cfg: CommodConfig, f_logit=None, ratio_weights=None,
                 verbose=False) -> TrainedCommod:
    """Alternating min-max training of the ratio net against the adversary.

    ``base`` is anything with ``logits(X)``; pass ``f_logit`` directly (and
    ``base=None``) to use externally computed scores. Each batch takes
    ``adv_steps_per_gen_step`` adversary steps, then one ratio-net step.
    The adversary alone trains for ``adv_warmup_epochs`` first.
    """
    X, y, s = train.X, train.y, train.s
    if f_logit is None:
        f_logit = base.logits(X)
    f_logit = np.asarray(f_logit, dtype=float)
    if len(f_logit) != len(y):
        raise ValueError("f_logit does not match the training rows")
    rng = np.random.default_rng(cfg.seed)
    net = init_ratio_net(X.shape[1], cfg.k, rng, cfg.include_flogit_input)
    adv = init_adversary(cfg.fairness_mode, rng, cfg.adv_hidden)
    gen_opt = make_optimizer(cfg.optimizer, cfg.lr_gen)
    adv_opt = make_optimizer(cfg.optimizer, cfg.lr_adv)
    weights = None if ratio_weights is None else np.asarray(ratio_weights, dtype=float)
    yhat_f = (f_logit > 0).astype(int)

    def current_z(rows):
        return ratio(net, X[rows], f_logit[rows]) * f_logit[rows]

    for _ in range(cfg.adv_warmup_epochs):
        for rows in _batches(len(y), cfg.batch_size, rng):
            _adv_update(adv, adv_opt, current_z(rows), y[rows], s[rows])

    history = []
    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(("L_Y", "L_S", "L_ratio", "L_sparsity", "L_diversity", "total"), 0.0)
        batches = _batches(len(y), cfg.batch_size, rng)
        for b, rows in enumerate(batches):
            for _ in range(cfg.adv_steps_per_gen_step):
                _adv_update(adv, adv_opt, current_z(rows), y[rows], s[rows])
            comp = loss_components(net, adv, X[rows], y[rows], s[rows], f_logit[rows], cfg,
                                   None if weights is None else weights[rows], with_grads=True)
            if not np.isfinite(comp["total"]):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            gen_opt(net.params(), comp["grads"])
            for key in sums:
                sums[key] += comp[key] / len(batches)
        yhat = (ratio(net, X, f_logit) * f_logit > 0).astype(int)
        sums.update(epoch=epoch, p_rule=metrics.p_rule(yhat, s),
                    dm=metrics.disparate_mistreatment(yhat, y, s)[2],
                    accuracy=metrics.accuracy(yhat, y),
                    change_proportion=metrics.change_proportion(yhat_f, yhat))
        history.append(sums)
        if verbose:
            print(f"epoch {epoch:3d} " + " ".join(f"{k}={v:.4f}" for k, v in sums.items() if k != "epoch"))
    return TrainedCommod(net, adv, cfg, history)


# --------------------------------------------------------------------------
# baselines


@dataclass
class TrainedAdvDebias:
    predictor: DenseNet
    adversary: Adversary
    config: CommodConfig
    history: list = field(default_factory=list)

    def logit(self, X):
        out, _ = forward(self.predictor, np.asarray(X, dtype=float))
        return out[:, 0]

    def predict_proba(self, X):
        return sigmoid(self.logit(X))

    def predict(self, X):
        return (self.logit(X) > 0).astype(int)

    def to_dict(self):
        return {"config": asdict(self.config), "predictor": self.predictor.to_dict(),
                "adversary": self.adversary.to_dict(), "history": self.history}


def advdebias_loss(predictor, adv, X, y, s, lambda_fair, with_grads=False):
    out, cache = forward(predictor, X)
    z = out[:, 0]
    L_Y, dz_y = bce_with_logits(z, y)
    L_S, _, dz_s = adv.loss(z, y, s)
    res = {"L_Y": L_Y, "L_S": L_S, "total": L_Y - lambda_fair * L_S, "z": z}
    if with_grads:
        grads, _ = backward(predictor, cache, (dz_y - lambda_fair * dz_s)[:, None])
        res["grads"] = grads
    return res


def train_advdebias_baseline(train, cfg: CommodConfig, hidden=32, yhat_ref=None) -> TrainedAdvDebias:
    """Adversarial debiasing from scratch: same loop, a fresh relu net on X.

    No ratio, no base model and no concept penalties. ``yhat_ref`` (the base
    model's training predictions) only feeds the change column of the history.
    """
    X, y, s = train.X, train.y, train.s
    rng = np.random.default_rng(cfg.seed)
    predictor = init_dense([X.shape[1], hidden, 1], ["relu", "identity"], rng)
    adv = init_adversary(cfg.fairness_mode, rng, cfg.adv_hidden)
    gen_opt = make_optimizer(cfg.optimizer, cfg.lr_gen)
    adv_opt = make_optimizer(cfg.optimizer, cfg.lr_adv)

    def z_of(rows):
        return forward(predictor, X[rows])[0][:, 0]

    for _ in range(cfg.adv_warmup_epochs):
        for rows in _batches(len(y), cfg.batch_size, rng):
            _adv_update(adv, adv_opt, z_of(rows), y[rows], s[rows])

    history = []
    for epoch in range(cfg.epochs):
        sums = {"L_Y": 0.0, "L_S": 0.0, "total": 0.0}
        batches = _batches(len(y), cfg.batch_size, rng)
        for b, rows in enumerate(batches):
            for _ in range(cfg.adv_steps_per_gen_step):
                _adv_update(adv, adv_opt, z_of(rows), y[rows], s[rows])
            res = advdebias_loss(predictor, adv, X[rows], y[rows], s[rows], cfg.lambda_fair, True)
            if not np.isfinite(res["total"]):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            gen_opt(predictor.params(), res["grads"])
            for key in sums:
                sums[key] += res[key] / len(batches)
        yhat = (forward(predictor, X)[0][:, 0] > 0).astype(int)
        sums.update(epoch=epoch, p_rule=metrics.p_rule(yhat, s), accuracy=metrics.accuracy(yhat, y))
        if yhat_ref is not None:
            sums["change_proportion"] = metrics.change_proportion(yhat_ref, yhat)
        history.append(sums)
    return TrainedAdvDebias(predictor, adv, cfg, history)


def roc_postprocess(scores, s, theta):
    """Reject-option relabeling around the 0.5 threshold.

    Inside the band ``|score - 0.5| < theta`` the deprived group (s=1) gets 1
    and the favored group (s=0) gets 0; outside it, plain thresholding.
    """
    if not 0.0 <= theta < 0.5:
        raise ValueError("theta must lie in [0, 0.5)")
    scores = np.asarray(scores, dtype=float)
    s = np.asarray(s).astype(int)
    out = (scores > 0.5).astype(int)
    band = np.abs(scores - 0.5) < theta
    out[band] = s[band]
    return out


def explain(net: ConceptRatioNet, feature_names=None, eps=0.01):
    """Per-concept head weight and the features above ``eps``, largest first."""
    d = net.W.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(d)]
    if net.include_flogit_input and len(names) == d - 1:
        names.append("f_logit")
    report = []
    for i in range(net.k):
        row = net.W[i]
        order = sorted((j for j in range(d) if abs(row[j]) > eps), key=lambda j: -abs(row[j]))
        vi = float(net.v[i])
        entry = {"concept": i, "head_weight": vi,
                 "direction": ("contributes positively to changes" if vi > 0 else
                               "contributes negatively to changes" if vi < 0 else "no contribution"),
                 "features": [(names[j], float(row[j])) for j in order]}
        if not order:
            warnings.warn(f"concept {i} has no weight above {eps}")
            entry["empty"] = True
        report.append(entry)
    return report
