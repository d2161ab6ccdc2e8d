"""Exact finite-support versions of the minimal-update theory, plus brute-force checks.

Two families live here:

* cost-sensitive risks over a finite joint distribution and the
  fairness-aware Bayes-optimal classifier (a threshold on a linear score);
* integer flip-budget results: how far ``K`` label flips can move the
  P-Rule, and where the affine Disparate Mistreatment model is minimized.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .metrics import PredictionTable

TARGETS = ("Y", "S", "F")
PAIRINGS = ("semantic", "paper")


@dataclass(frozen=True)
class FiniteDistribution:
    """Joint law on ``m`` support points.

    ``eta``, ``eta_bar`` and ``eta_star`` are P(Y=1|x), P(S=1|x) and
    P(Yhat_f=1|x); the priors are their weighted means.
    """

    weight: np.ndarray
    eta: np.ndarray
    eta_bar: np.ndarray
    eta_star: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("weight", "eta", "eta_bar", "eta_star"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if np.any((a < 0) | (a > 1)):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            arrays[name] = a
            object.__setattr__(self, name, a)
        m = len(arrays["weight"])
        if any(len(a) != m for a in arrays.values()):
            raise ValueError("all per-point arrays must have the same length")
        if abs(arrays["weight"].sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    @property
    def m(self):
        return len(self.weight)

    def conditional(self, target):
        return {"Y": self.eta, "S": self.eta_bar, "F": self.eta_star}[target]

    def prior(self, target):
        return float(self.weight @ self.conditional(target))

    @property
    def pi(self):
        return self.prior("Y")

    @property
    def pi_bar(self):
        return self.prior("S")

    @property
    def pi_star(self):
        return self.prior("F")

    @classmethod
    def random(cls, m, rng):
        w = rng.dirichlet(np.ones(m))
        return cls(w, rng.uniform(size=m), rng.uniform(size=m), rng.uniform(size=m))

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("weight", "eta", "eta_bar", "eta_star")}

    @classmethod
    def from_dict(cls, d):
        return cls(d["weight"], d["eta"], d["eta_bar"], d["eta_star"])


@dataclass(frozen=True)
class CostSpec:
    c: float
    c_bar: float
    c_star: float
    lambda_fair: float = 0.0
    lambda_ratio: float = 0.0

    def __post_init__(self):
        for name in ("c", "c_bar", "c_star"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1)")


def _rates(g, dist, target):
    g = np.asarray(g, dtype=float)
    if g.shape != (dist.m,):
        raise ValueError(f"classifier has {g.size} values for {dist.m} support points")
    if np.any((g < 0) | (g > 1)):
        raise ValueError("classifier values must lie in [0, 1]")
    cond = dist.conditional(target)
    prior = dist.prior(target)
    if prior <= 0.0 or prior >= 1.0:
        raise ValueError(f"degenerate conditioning: P({target}=1) = {prior}")
    fnr = float(dist.weight @ (cond * (1.0 - g))) / prior
    fpr = float(dist.weight @ ((1.0 - cond) * g)) / (1.0 - prior)
    return fnr, fpr, prior


def cs_risk(g, dist: FiniteDistribution, target="Y", c=0.5, balanced=False):
    """Cost-sensitive risk of the randomized classifier ``g`` against ``target``.

    Unbalanced: ``pi (1-c) FNR + (1-pi) c FPR``; balanced drops the priors.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    fnr, fpr, prior = _rates(g, dist, target)
    if balanced:
        return (1.0 - c) * fnr + c * fpr
    return prior * (1.0 - c) * fnr + (1.0 - prior) * c * fpr


def _multipliers(costs, pairing):
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}")
    if pairing == "semantic":
        return costs.lambda_fair, costs.lambda_ratio
    return costs.lambda_ratio, costs.lambda_fair


def lagrangian_risk(g, dist, costs: CostSpec, pairing="semantic", balanced=True):
    """``CS(g; Y, c) - l_S * CS_bal(g; S, c_bar) - l_F * CS_bal(g; F, c_star)``.

    ``pairing="semantic"`` puts ``lambda_fair`` on the sensitive-attribute
    term and ``lambda_ratio`` on the change term; ``"paper"`` swaps them.
    ``balanced=False`` uses the prior-weighted form for the two constraint terms.
    """
    lam_s, lam_f = _multipliers(costs, pairing)
    return (cs_risk(g, dist, "Y", costs.c)
            - lam_s * cs_risk(g, dist, "S", costs.c_bar, balanced)
            - lam_f * cs_risk(g, dist, "F", costs.c_star, balanced))


def _affine_term(dist, target, c, balanced):
    """``(scale, threshold)`` with the risk's g-coefficient equal to ``-scale*(cond - threshold)``."""
    if not balanced:
        return 1.0, c
    prior = dist.prior(target)
    a, b = (1.0 - c) / prior, c / (1.0 - prior)
    return a + b, b / (a + b)


def boc_score(dist, costs: CostSpec, pairing="semantic", balanced=True):
    """Pointwise score ``s*(x)``; the optimal classifier predicts 1 where it is positive.

    With ``balanced=False`` this is exactly
    ``eta - c - l_S (eta_bar - c_bar) - l_F (eta_star - c_star)``. The
    balanced constraint terms rescale each bracket and shift its threshold.
    """
    lam_s, lam_f = _multipliers(costs, pairing)
    k_s, t_s = _affine_term(dist, "S", costs.c_bar, balanced)
    k_f, t_f = _affine_term(dist, "F", costs.c_star, balanced)
    return (dist.eta - costs.c
            - lam_s * k_s * (dist.eta_bar - t_s)
            - lam_f * k_f * (dist.eta_star - t_f))


def boc(dist, costs: CostSpec, alpha=0.5, pairing="semantic", balanced=True, negate=False):
    """Bayes-optimal randomized classifier: 1 where s* > 0, ``alpha`` at ties, else 0.

    ``negate`` flips the score sign; it exists only to show that the
    exhaustive checks catch a wrong rule.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    s = boc_score(dist, costs, pairing, balanced)
    if negate:
        s = -s
    return np.where(s > 0, 1.0, np.where(s == 0, alpha, 0.0))


def exhaustive_min_risk(dist, costs, pairing="semantic", balanced=True):
    """Minimum Lagrangian risk over all ``2**m`` deterministic classifiers."""
    best, arg = np.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=dist.m):
        r = lagrangian_risk(np.array(bits), dist, costs, pairing, balanced)
        if r < best:
            best, arg = r, bits
    return best, np.array(arg)


def verify_change_identity(table: PredictionTable, statement_form=False, tol=1e-12):
    """Check the total-probability identity for the change rate.

    ``lhs = P(Yf != Yg)``; ``rhs = P(Yg=1) P(Yf=0 | Yg=1) + P(Yg=0) P(Yf=1 | Yg=0)``.
    Conditioning on an empty event contributes 0. ``statement_form`` instead
    conditions the rates on ``Yf`` (weights still ``P(Yg=1)``, ``P(Yg=0)``),
    which is not an identity in general.
    """
    f, g = table.yhat_f, table.yhat_g
    lhs = float(np.mean(f != g))
    c_star = float(np.mean(g == 1))

    def cond(event, given):
        return float(event[given].mean()) if given.any() else 0.0

    if statement_form:
        rhs = c_star * cond(g == 0, f == 1) + (1.0 - c_star) * cond(g == 1, f == 0)
    else:
        rhs = c_star * cond(f == 0, g == 1) + (1.0 - c_star) * cond(f == 1, g == 0)
    return lhs, rhs, abs(lhs - rhs) < tol


# --------------------------------------------------------------------------
# flip budgets

@dataclass(frozen=True)
class FlipTable:
    """Counts of base predictions by (prediction, group): ``gamma_<yhat><s>``.

    ``gamma_11`` = s=1 predicted 1, ``gamma_01`` = s=1 predicted 0,
    ``gamma_10`` = s=0 predicted 1, ``gamma_00`` = s=0 predicted 0.
    ``n_sy`` optionally carries label counts ``{(s, y): count}``.
    """

    gamma_11: int
    gamma_10: int
    gamma_01: int
    gamma_00: int
    n_sy: dict = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("gamma_11", "gamma_10", "gamma_01", "gamma_00"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer")
        if self.S1 == 0 or self.S0 == 0:
            raise ValueError("both sensitive groups must be nonempty")

    @property
    def S1(self):
        return self.gamma_11 + self.gamma_01

    @property
    def S0(self):
        return self.gamma_10 + self.gamma_00

    @property
    def C(self):
        return Fraction(self.S0, self.S1)

    def expand(self):
        """Row-level ``(yhat, s)`` arrays realizing the counts."""
        yhat = [1] * self.gamma_11 + [0] * self.gamma_01 + [1] * self.gamma_10 + [0] * self.gamma_00
        s = [1] * self.S1 + [0] * self.S0
        return np.array(yhat), np.array(s)

    @classmethod
    def from_predictions(cls, yhat, s, y=None):
        yhat, s = np.asarray(yhat).astype(int), np.asarray(s).astype(int)
        n_sy = None
        if y is not None:
            y = np.asarray(y).astype(int)
            n_sy = {(a, b): int(np.sum((s == a) & (y == b))) for a in (0, 1) for b in (0, 1)}
        return cls(int(np.sum((s == 1) & (yhat == 1))), int(np.sum((s == 0) & (yhat == 1))),
                   int(np.sum((s == 1) & (yhat == 0))), int(np.sum((s == 0) & (yhat == 0))),
                   n_sy)

    @classmethod
    def from_dict(cls, d):
        n_sy = None
        if d.get("n_sy"):
            n_sy = {tuple(int(c) for c in k.split(",")): int(v) for k, v in d["n_sy"].items()}
        return cls(d["gamma_11"], d["gamma_10"], d["gamma_01"], d["gamma_00"], n_sy)


def count_p_rule(pos1, S1, pos0, S0):
    """Exact P-Rule from positive counts per group (same zero conventions as metrics.p_rule)."""
    r1, r0 = Fraction(pos1, S1), Fraction(pos0, S0)
    if r1 == 0 and r0 == 0:
        return Fraction(1)
    if r1 == 0 or r0 == 0:
        return Fraction(0)
    return min(r1 / r0, r0 / r1)


def _orientation(t: FlipTable):
    """Which group lags. Returns (lagging_s, caps) where caps = (raise-lagging, lower-leading)."""
    lag1 = Fraction(t.gamma_11, t.S1) <= Fraction(t.gamma_10, t.S0)
    if lag1:
        return 1, (t.gamma_01, t.gamma_10)
    return 0, (t.gamma_00, t.gamma_11)


def _allocate(t: FlipTable, a, b):
    """Counts after ``a`` raising flips in the lagging group and ``b`` lowering flips in the leading one."""
    lag, _ = _orientation(t)
    if lag == 1:
        return t.gamma_11 + a, t.gamma_10 - b
    return t.gamma_11 - b, t.gamma_10 + a


def _ratio(t, a, b):
    """lagging rate / leading rate after the allocation (inf when leading rate is 0)."""
    lag, _ = _orientation(t)
    pos1, pos0 = _allocate(t, a, b)
    r1, r0 = Fraction(pos1, t.S1), Fraction(pos0, t.S0)
    lag_r, lead_r = (r1, r0) if lag == 1 else (r0, r1)
    if lead_r == 0:
        return Fraction(10**9) if lag_r > 0 else Fraction(1)
    return lag_r / lead_r


def _endpoints(t: FlipTable, K):
    _, (cap_a, cap_b) = _orientation(t)
    if K > cap_a + cap_b:
        raise ValueError("insufficient flippable instances for this budget")
    a_max = min(K, cap_a)
    b_max = min(K, cap_b)
    return {"a": (a_max, K - a_max), "b": (K - b_max, b_max)}


def _allocation_p_rule(t, a, b):
    pos1, pos0 = _allocate(t, a, b)
    return count_p_rule(pos1, t.S1, pos0, t.S0)


def max_prule_k_flips(t: FlipTable, K: int):
    """Best P-Rule from ``K`` flips spent at one extreme of the allocation.

    Extreme (a) raises the lagging group (0 -> 1 flips), extreme (b) lowers
    the leading group (1 -> 0 flips); each takes as many flips as its pool
    allows and any overflow goes to the other side. Returns
    ``(best_p_rule, {"extreme": "a"|"b", "raise": int, "lower": int})``.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    ends = _endpoints(t, K)
    scored = {k: _allocation_p_rule(t, *ab) for k, ab in ends.items()}
    best = max(scored, key=lambda k: (scored[k], k == "a"))
    a, b = ends[best]
    return float(scored[best]), {"extreme": best, "raise": a, "lower": b,
                                 "p_rule_exact": scored[best]}


def switching_point(t: FlipTable, tol=None):
    """Smallest ``K`` at which some allocation reaches parity.

    Parity means P-Rule >= 1 - tol (default ``1/(S0+S1)``) or the lagging
    group's rate catching up with the leading one. Since the rate ratio is
    monotone along each budget's allocation segment, the segment endpoints
    decide. Returns ``(K_s, reachable)``; if parity is out of reach the total
    number of useful flips is returned with ``reachable=False``.
    """
    tol = Fraction(1, t.S0 + t.S1) if tol is None else Fraction(tol)
    _, (cap_a, cap_b) = _orientation(t)
    for K in range(cap_a + cap_b + 1):
        for a, b in _endpoints(t, K).values():
            if _ratio(t, a, b) >= 1 or _allocation_p_rule(t, a, b) >= 1 - tol:
                return K, True
    return cap_a + cap_b, False


def brute_force_prule(t: FlipTable, K: int):
    """Best P-Rule over every set of exactly ``K`` flipped instances (any direction)."""
    cells = [(1, 1, t.gamma_11), (1, 0, t.gamma_01), (0, 1, t.gamma_10), (0, 0, t.gamma_00)]
    best = Fraction(-1)
    # flipping k instances in one cell is the same for every choice of k, so
    # enumerate per-cell counts rather than raw subsets
    for ks in itertools.product(*[range(min(K, c) + 1) for *_, c in cells]):
        if sum(ks) != K:
            continue
        pos1, pos0 = t.gamma_11, t.gamma_10
        for (s, yh, _), k in zip(cells, ks):
            delta = -k if yh == 1 else k
            if s == 1:
                pos1 += delta
            else:
                pos0 += delta
        best = max(best, count_p_rule(pos1, t.S1, pos0, t.S0))
    return best


def brute_force_prule_subsets(yhat, s, K):
    """Literal enumeration over ``itertools.combinations`` of rows; for small n only."""
    yhat, s = np.asarray(yhat).astype(int), np.asarray(s).astype(int)
    S1, S0 = int((s == 1).sum()), int((s == 0).sum())
    best = Fraction(-1)
    for rows in itertools.combinations(range(len(yhat)), K):
        yy = yhat.copy()
        yy[list(rows)] ^= 1
        best = max(best, count_p_rule(int(yy[s == 1].sum()), S1, int(yy[s == 0].sum()), S0))
    return best


@dataclass
class DMAllocation:
    gamma: Fraction
    delta: Fraction
    x_opt: int | None
    tie: bool
    predicted_dm: Fraction
    curve: list


def min_dm_k_flips(n_sy, deltas, K):
    """Endpoint rule for the affine Disparate Mistreatment model.

    ``n_sy`` maps ``(s, y)`` to counts. Each TPR-directed flip removes
    ``gamma = max_s 1/N_{s,1}`` from the TPR gap and each FPR-directed flip
    removes ``delta = max_s 1/N_{s,0}`` from the FPR gap, so with ``x`` TPR
    flips ``DM(x) = (dTPR + dFPR - delta K) + (delta - gamma) x``, floored at 0.
    ``x_opt`` is 0 if delta > gamma, K if delta < gamma and None (``tie``) otherwise.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    for s_ in (0, 1):
        for y_ in (0, 1):
            if n_sy.get((s_, y_), 0) <= 0:
                raise ValueError(f"empty (s={s_}, y={y_}) cell")
    gamma = max(Fraction(1, n_sy[(s_, 1)]) for s_ in (0, 1))
    delta = max(Fraction(1, n_sy[(s_, 0)]) for s_ in (0, 1))
    d_tpr, d_fpr = (Fraction(v).limit_denominator(10**12) if isinstance(v, float) else Fraction(v)
                    for v in deltas)

    def dm(x):
        return max(Fraction(0), (d_tpr + d_fpr - delta * K) + (delta - gamma) * x)

    curve = [dm(x) for x in range(K + 1)]
    if delta > gamma:
        x_opt, tie = 0, False
    elif delta < gamma:
        x_opt, tie = K, False
    else:
        x_opt, tie = None, True
    return DMAllocation(gamma, delta, x_opt, tie, curve[0 if x_opt is None else x_opt], curve)


# --------------------------------------------------------------------------
# randomized verification suites


def suite_boc(n_dist=50, max_support=12, seed=0, negate=False, tol=1e-12, balanced=True):
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_dist):
        m = int(rng.integers(2, max_support + 1))
        dist = FiniteDistribution.random(m, rng)
        costs = CostSpec(*rng.uniform(0.05, 0.95, size=3),
                         lambda_fair=float(rng.normal(0, 2)), lambda_ratio=float(rng.normal(0, 2)))
        for pairing in PAIRINGS:
            g = boc(dist, costs, float(rng.uniform()), pairing, balanced, negate)
            got = lagrangian_risk(g, dist, costs, pairing, balanced)
            best, _ = exhaustive_min_risk(dist, costs, pairing, balanced)
            if got > best + tol:
                failures.append({"case": i, "pairing": pairing, "boc": got, "min": best})
    return {"suite": "boc_optimality", "cases": n_dist, "balanced": balanced, "passed": not failures,
            "failures": failures[:5]}


def random_prediction_table(rng, max_len=64):
    n = int(rng.integers(1, max_len + 1))
    return PredictionTable(rng.integers(0, 2, n), rng.integers(0, 2, n),
                           rng.integers(0, 2, n), rng.integers(0, 2, n))


def suite_change_identity(n_tables=1000, max_len=64, seed=0):
    rng = np.random.default_rng(seed)
    worst, failures = 0.0, []
    for i in range(n_tables):
        lhs, rhs, ok = verify_change_identity(random_prediction_table(rng, max_len))
        worst = max(worst, abs(lhs - rhs))
        if not ok:
            failures.append({"case": i, "lhs": lhs, "rhs": rhs})
    return {"suite": "change_identity", "cases": n_tables, "passed": not failures,
            "max_gap": worst, "failures": failures[:5]}


def random_flip_case(rng, max_n=16, max_K=4):
    """A random FlipTable with a budget ``1 <= K <= max_K`` strictly below its switching point."""
    while True:
        n = int(rng.integers(4, max_n + 1))
        counts = rng.multinomial(n, np.ones(4) / 4)
        try:
            t = FlipTable(*map(int, counts))
        except ValueError:
            continue
        ks, _ = switching_point(t)
        if ks <= 1:
            continue
        return t, int(rng.integers(1, min(max_K, ks - 1) + 1))


def suite_dp_flips(n_cases=100, max_n=16, max_K=4, seed=0):
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_cases):
        t, K = random_flip_case(rng, max_n, max_K)
        _, alloc = max_prule_k_flips(t, K)
        yhat, s = t.expand()
        brute = brute_force_prule_subsets(yhat, s, K)
        if brute != alloc["p_rule_exact"]:
            failures.append({"case": i, "table": [t.gamma_11, t.gamma_10, t.gamma_01, t.gamma_00],
                             "K": K, "extreme": str(alloc["p_rule_exact"]), "brute": str(brute)})
    return {"suite": "dp_extreme_flips", "cases": n_cases, "passed": not failures,
            "failures": failures[:5]}


def suite_dm_endpoints(n_cases=100, max_K=10, seed=0):
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_cases):
        n_sy = {(s_, y_): int(rng.integers(1, 12)) for s_ in (0, 1) for y_ in (0, 1)}
        if i % 10 == 0:  # force some exact ties
            n_sy[(1, 0)] = min(n_sy[(0, 1)], n_sy[(1, 1)])
            n_sy[(0, 0)] = max(n_sy[(1, 0)], n_sy[(0, 0)])
        K = int(rng.integers(1, max_K + 1))
        deltas = (Fraction(int(rng.integers(0, 100)), 100), Fraction(int(rng.integers(0, 100)), 100))
        res = min_dm_k_flips(n_sy, deltas, K)
        low = min(res.curve)
        if res.tie:
            ok = len(set(res.curve)) == 1
        else:
            ok = res.curve[res.x_opt] == low
        if not ok:
            failures.append({"case": i, "n_sy": str(n_sy), "K": K})
    return {"suite": "dm_endpoints", "cases": n_cases, "passed": not failures,
            "failures": failures[:5]}


def verify_all(seed=0, max_support=12, max_n=16, max_K=4, negate_boc=False, balanced=True):
    reports = [suite_boc(50, max_support, seed, negate=negate_boc, balanced=balanced),
               suite_change_identity(1000, 64, seed),
               suite_dp_flips(100, max_n, max_K, seed),
               suite_dm_endpoints(100, 10, seed)]
    return {"passed": all(r["passed"] for r in reports), "suites": reports}


def dumps_report(report) -> str:
    return json.dumps(report, indent=1, default=str)
