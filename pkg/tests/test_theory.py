import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commod.metrics import PredictionTable, p_rule
from commod.theory import (CostSpec, FiniteDistribution, FlipTable, boc, boc_score, brute_force_prule,
                           brute_force_prule_subsets, count_p_rule, cs_risk, dumps_report,
                           exhaustive_min_risk, lagrangian_risk, max_prule_k_flips, min_dm_k_flips,
                           random_flip_case, suite_boc, switching_point, verify_all,
                           verify_change_identity)


def dist2():
    return FiniteDistribution([0.5, 0.5], [1.0, 0.0], [0.3, 0.6], [0.8, 0.1])


def test_cs_risk_constant_classifiers():
    d = FiniteDistribution.random(6, np.random.default_rng(0))
    assert cs_risk(np.ones(6), d, "Y", 0.3) == pytest.approx((1 - d.pi) * 0.3)
    assert cs_risk(np.zeros(6), d, "Y", 0.3) == pytest.approx(d.pi * 0.7)


def test_cs_risk_perfect_classifier():
    assert cs_risk([1.0, 0.0], dist2(), "Y", 0.3) == 0.0


def test_cs_risk_degenerate_prior():
    d = FiniteDistribution([0.5, 0.5], [0.0, 0.0], [0.5, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError, match="degenerate"):
        cs_risk([1.0, 0.0], d, "Y", 0.3)


def test_cs_risk_against_a_sampled_population():
    # independent oracle: expand the finite law into an explicit weighted population
    d = FiniteDistribution([0.25, 0.25, 0.5], [0.5, 1.0, 0.0], [0.5, 0.5, 0.5], [0.5, 0.5, 0.5])
    g = np.array([1.0, 0.0, 1.0])
    # rows: (weight, y, prediction)
    rows = [(0.125, 1, 1), (0.125, 0, 1), (0.25, 1, 0), (0.5, 0, 1)]
    pos = sum(w for w, y, _ in rows if y == 1)
    fnr = sum(w for w, y, p in rows if y == 1 and p == 0) / pos
    fpr = sum(w for w, y, p in rows if y == 0 and p == 1) / (1 - pos)
    assert cs_risk(g, d, "Y", 0.4) == pytest.approx(pos * 0.6 * fnr + (1 - pos) * 0.4 * fpr)
    assert cs_risk(g, d, "Y", 0.4, balanced=True) == pytest.approx(0.6 * fnr + 0.4 * fpr)


def test_lagrangian_with_zero_multipliers_is_plain_risk():
    d = FiniteDistribution.random(5, np.random.default_rng(1))
    g = np.random.default_rng(2).uniform(size=5)
    costs = CostSpec(0.3, 0.4, 0.5)
    assert lagrangian_risk(g, d, costs) == pytest.approx(cs_risk(g, d, "Y", 0.3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_lagrangian_is_linear_in_g(seed):
    rng = np.random.default_rng(seed)
    d = FiniteDistribution.random(int(rng.integers(2, 8)), rng)
    costs = CostSpec(*rng.uniform(0.1, 0.9, 3), lambda_fair=float(rng.normal()), lambda_ratio=float(rng.normal()))
    r0, r1 = lagrangian_risk(np.zeros(d.m), d, costs), lagrangian_risk(np.ones(d.m), d, costs)
    assert lagrangian_risk(np.full(d.m, 0.5), d, costs) == pytest.approx((r0 + r1) / 2, abs=1e-12)
    # difference of the constant classifiers equals the weighted sum of the pointwise g-coefficients
    coef = [lagrangian_risk(np.eye(d.m)[i], d, costs) - r0 for i in range(d.m)]
    assert r1 - r0 == pytest.approx(sum(coef), abs=1e-12)


def test_boc_without_multipliers_is_cost_sensitive_bayes():
    d = FiniteDistribution.random(8, np.random.default_rng(3))
    g = boc(d, CostSpec(0.35, 0.5, 0.5))
    assert np.array_equal(g, (d.eta > 0.35).astype(float))


def test_boc_tie_gets_alpha():
    d = FiniteDistribution([0.5, 0.5], [0.3, 0.9], [0.5, 0.5], [0.5, 0.5])
    g = boc(d, CostSpec(0.3, 0.5, 0.5), alpha=0.5)
    assert g.tolist() == [0.5, 1.0]


def test_literal_score_formula():
    d = FiniteDistribution.random(5, np.random.default_rng(4))
    costs = CostSpec(0.3, 0.4, 0.6, lambda_fair=0.7, lambda_ratio=1.3)
    s = boc_score(d, costs, pairing="paper", balanced=False)
    expect = d.eta - 0.3 - 1.3 * (d.eta_bar - 0.4) - 0.7 * (d.eta_star - 0.6)
    assert np.allclose(s, expect, atol=1e-15)


@pytest.mark.parametrize("pairing", ["semantic", "paper"])
@pytest.mark.parametrize("balanced", [True, False])
@pytest.mark.parametrize("seed", range(5))
def test_boc_is_optimal_on_eight_points(pairing, balanced, seed):
    rng = np.random.default_rng(seed)
    d = FiniteDistribution.random(8, rng)
    costs = CostSpec(*rng.uniform(0.1, 0.9, 3), lambda_fair=float(rng.normal(0, 2)),
                     lambda_ratio=float(rng.normal(0, 2)))
    g = boc(d, costs, 0.5, pairing, balanced)
    best, _ = exhaustive_min_risk(d, costs, pairing, balanced)
    assert lagrangian_risk(g, d, costs, pairing, balanced) <= best + 1e-12


def test_negated_rule_is_caught():
    assert not suite_boc(20, 8, seed=0, negate=True)["passed"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_boc_depends_only_on_score_sign(seed):
    rng = np.random.default_rng(seed)
    d = FiniteDistribution.random(10, rng)
    costs = CostSpec(*rng.uniform(0.1, 0.9, 3), lambda_fair=float(rng.normal()), lambda_ratio=float(rng.normal()))
    s, g = boc_score(d, costs), boc(d, costs, 0.3)
    for sign in (-1, 0, 1):
        assert len(set(g[np.sign(s) == sign])) <= 1


def test_change_identity_examples():
    same = PredictionTable([0, 1], [0, 1], [1, 0], [1, 0])
    assert verify_change_identity(same) == (0.0, 0.0, True)
    lhs, rhs, ok = verify_change_identity(PredictionTable([0, 1], [0, 1], [1, 0], [0, 0]))
    assert lhs == 0.5 and rhs == 0.5 and ok


def test_statement_form_is_not_an_identity():
    t = PredictionTable([0] * 4, [0, 1, 0, 1], [1, 1, 0, 0], [1, 0, 0, 0])
    lhs, rhs, ok = verify_change_identity(t, statement_form=True)
    assert not ok


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=64))
def test_change_identity_always_holds(pairs):
    f = [a for a, _ in pairs]
    g = [b for _, b in pairs]
    zeros = [0] * len(pairs)
    assert verify_change_identity(PredictionTable(zeros, zeros, f, g))[2]


EXAMPLE = FlipTable(gamma_11=1, gamma_10=3, gamma_01=2, gamma_00=0)


def test_zero_budget_keeps_p_rule():
    yhat, s = EXAMPLE.expand()
    assert max_prule_k_flips(EXAMPLE, 0)[0] == pytest.approx(p_rule(yhat, s))


def test_single_flip_example():
    assert EXAMPLE.C == 1
    best, alloc = max_prule_k_flips(EXAMPLE, 1)
    assert alloc["p_rule_exact"] == Fraction(2, 3) and alloc["extreme"] == "a"
    yhat, s = EXAMPLE.expand()
    assert brute_force_prule_subsets(yhat, s, 1) == Fraction(2, 3)
    assert brute_force_prule(EXAMPLE, 1) == Fraction(2, 3)


def test_insufficient_flips():
    with pytest.raises(ValueError, match="insufficient flippable instances"):
        max_prule_k_flips(FlipTable(1, 1, 1, 1), 3)


def test_switching_point_examples():
    assert switching_point(FlipTable(2, 2, 2, 2)) == (0, True)
    assert switching_point(EXAMPLE) == (2, True)
    assert switching_point(FlipTable(2, 6, 4, 0))[0] == 4


def test_switching_point_unreachable():
    # lagging group s=1 has no zeros to raise and the leading group no ones to lower
    t = FlipTable(gamma_11=1, gamma_10=0, gamma_01=0, gamma_00=5)
    k, reachable = switching_point(t, tol=0)
    assert not reachable or k <= 5


def _table_strategy(max_n=12):
    return st.tuples(*[st.integers(0, max_n // 4 + 1)] * 4).filter(
        lambda c: c[0] + c[2] > 0 and c[1] + c[3] > 0)


@settings(max_examples=80, deadline=None)
@given(_table_strategy(), st.integers(1, 4))
def test_extreme_allocation_is_never_beaten(counts, K):
    t = FlipTable(*counts)
    ks, _ = switching_point(t)
    if K >= ks:
        return
    _, alloc = max_prule_k_flips(t, K)
    yhat, s = t.expand()
    assert brute_force_prule_subsets(yhat, s, K) == alloc["p_rule_exact"]


@settings(max_examples=60, deadline=None)
@given(_table_strategy())
def test_switching_point_is_minimal(counts):
    t = FlipTable(*counts)
    ks, reachable = switching_point(t)
    tol = Fraction(1, t.S0 + t.S1)
    yhat, s = t.expand()
    for K in range(ks):
        assert brute_force_prule_subsets(yhat, s, K) < 1 - tol
    if reachable:
        # at K_s either the tolerance is met or the lagging rate has caught up
        assert (brute_force_prule_subsets(yhat, s, ks) >= 1 - tol) or _can_cross(yhat, s, ks)


def _can_cross(yhat, s, K):
    lag = 1 if yhat[s == 1].mean() <= yhat[s == 0].mean() else 0
    for rows in itertools.combinations(range(len(yhat)), K):
        yy = yhat.copy()
        yy[list(rows)] ^= 1
        if yy[s == lag].mean() >= yy[s != lag].mean():
            return True
    return False


def test_dm_case_table():
    n = {(0, 1): 10, (1, 1): 10, (0, 0): 2, (1, 0): 4}
    r = min_dm_k_flips(n, (0.4, 0.6), 3)
    assert (r.gamma, r.delta, r.x_opt) == (Fraction(1, 10), Fraction(1, 2), 0)
    n2 = {(0, 1): 2, (1, 1): 4, (0, 0): 10, (1, 0): 10}
    assert min_dm_k_flips(n2, (0.4, 0.6), 3).x_opt == 3
    n3 = {(0, 1): 5, (1, 1): 5, (0, 0): 5, (1, 0): 5}
    r3 = min_dm_k_flips(n3, (0.9, 0.9), 2)
    assert r3.tie and r3.x_opt is None and len(set(r3.curve)) == 1


def test_dm_empty_cell():
    with pytest.raises(ValueError, match="empty"):
        min_dm_k_flips({(0, 1): 1, (1, 1): 1, (0, 0): 0, (1, 0): 1}, (0.1, 0.1), 1)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 15), min_size=4, max_size=4), st.integers(1, 10),
       st.fractions(0, 1), st.fractions(0, 1))
def test_dm_endpoint_minimality(ns, K, dt, df):
    n_sy = dict(zip([(0, 1), (1, 1), (0, 0), (1, 0)], ns))
    r = min_dm_k_flips(n_sy, (dt, df), K)
    assert len(r.curve) == K + 1
    if r.tie:
        assert len(set(r.curve)) == 1
    else:
        assert r.curve[r.x_opt] == min(r.curve)
    # affine before the floor
    raw = [(dt + df - r.delta * K) + (r.delta - r.gamma) * x for x in range(K + 1)]
    assert all(c == max(Fraction(0), v) for c, v in zip(r.curve, raw))


def test_count_p_rule_matches_metrics():
    for pos1, S1, pos0, S0 in itertools.product(range(3), [2, 3], range(3), [2, 3]):
        if pos1 > S1 or pos0 > S0:
            continue
        yhat = [1] * pos1 + [0] * (S1 - pos1) + [1] * pos0 + [0] * (S0 - pos0)
        s = [1] * S1 + [0] * S0
        assert float(count_p_rule(pos1, S1, pos0, S0)) == pytest.approx(p_rule(yhat, s))


def test_random_flip_case_respects_precondition():
    rng = np.random.default_rng(0)
    for _ in range(20):
        t, K = random_flip_case(rng)
        assert 1 <= K < switching_point(t)[0]


def test_flip_table_json_and_validation():
    t = FlipTable.from_dict({"gamma_11": 1, "gamma_10": 3, "gamma_01": 2, "gamma_00": 0,
                             "n_sy": {"0,1": 3, "1,1": 2}})
    assert t == EXAMPLE and t.n_sy[(0, 1)] == 3
    with pytest.raises(ValueError):
        FlipTable(0, 1, 0, 1)


def test_distribution_validation_and_json():
    with pytest.raises(ValueError):
        FiniteDistribution([0.5, 0.4], [0, 1], [0, 1], [0, 1])
    d = FiniteDistribution.random(4, np.random.default_rng(0))
    back = FiniteDistribution.from_dict(json.loads(json.dumps(d.to_dict())))
    assert np.array_equal(back.eta, d.eta)


@pytest.mark.slow
def test_verify_all_passes_and_serializes():
    rep = verify_all(seed=0)
    assert rep["passed"]
    assert json.loads(dumps_report(rep))["passed"]
