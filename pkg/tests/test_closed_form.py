import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from privmkt import DegenerateDifferentiation, MarketParams, RiskDistribution, StrategyProfile
from privmkt import market_shares, sp_profit
from privmkt.closed_form import (
    check_feasibility,
    derived_constants,
    profits_c_tilde_form,
    solve_theorem1,
    stage1_dominated_factors,
    stage1_foc_residuals,
    stage1_reduced_profits,
    stage2_qos,
)

# frozen from the closed form at the reference constants, t=0.7, eps_bar=5
THM1 = dict(eps1=0.9345238095238102, eps2=4.68452380952381, v1=0.628273809523809,
            v2=2.799107142857142, x_tau=0.2968253968253968, pi1=0.11563822751322751,
            pi2=0.6489715608465607)


def feasible_params():
    return st.builds(
        lambda t, eb, p1, d: MarketParams(c=0.5, lam=0.75, r=0.7, t=t, eps_bar=eb, p=(p1, p1 + d)),
        st.floats(0.5, 0.95), st.floats(2.0, 8.0), st.floats(0.1, 0.8), st.floats(0.0, 0.8),
    ).filter(lambda p: check_feasibility(p).all_feasible)


def test_derived_constants(table1):
    alpha, ct = derived_constants(table1)
    assert alpha == pytest.approx(0.65)
    assert ct == pytest.approx(1.75)
    assert derived_constants(table1.replace(r=0.375))[0] == pytest.approx(0.0)


def test_feasibility_examples(table1):
    rep = check_feasibility(table1)
    assert rep.all_feasible
    assert rep.ratio == pytest.approx(0.4063492, abs=1e-6)
    assert rep.eps_band == pytest.approx((0.2380952, 0.9047619), abs=1e-6)
    assert rep.coverage_lhs == pytest.approx(295.9875) and rep.coverage_rhs == pytest.approx(40.96)
    low_t = check_feasibility(table1.replace(t=0.5))
    assert not low_t.all_feasible and low_t.failed() == ["eps"]
    assert low_t.ratio == pytest.approx(0.5689, abs=1e-4)
    assert low_t.eps_band[0] == pytest.approx(0.7333, abs=1e-4)
    assert check_feasibility(table1.replace(p=(0.5, 0.5))).ratio == 0.0


def test_feasibility_needs_two(table1):
    with pytest.raises(ValueError):
        check_feasibility(table1.replace(p=(0.4, 0.6, 0.8)))


def test_theorem1_values(table1):
    s = solve_theorem1(table1)
    for k, v in THM1.items():
        assert getattr(s, k) == pytest.approx(v, abs=1e-9), k
    assert s.feasibility.all_feasible


def test_theorem1_symmetric(table1):
    p = table1.replace(p=(0.6, 0.6), t=0.9)
    s = solve_theorem1(p)
    assert s.x_tau == 0.5
    base = 4 * p.c / (27 * p.t * p.eps_bar) * (9 * p.t * p.eps_bar / 8) ** 2
    assert s.pi1 == pytest.approx(base) and s.pi2 == pytest.approx(base)


def test_infeasible_still_solved(table1):
    s = solve_theorem1(table1.replace(t=0.5))
    assert not s.feasibility.all_feasible
    assert s.eps2 - s.eps1 == pytest.approx(3.75)
    out = s.to_outcome()
    assert out.warnings and "eps" in out.warnings[0]


@settings(max_examples=100)
@given(feasible_params())
def test_gap_and_qos_gap(params):
    s = solve_theorem1(params)
    d = params.p[1] - params.p[0]
    assert s.eps2 - s.eps1 == pytest.approx(0.75 * params.eps_bar, abs=1e-9)
    assert s.v2 - s.v1 == pytest.approx(0.75 * params.eps_bar * params.alpha - d / (3 * params.c), abs=1e-9)


@settings(max_examples=100)
@given(feasible_params())
def test_share_formula_and_profits_via_market(params):
    s = solve_theorem1(params)
    d = RiskDistribution.uniform(params.eps_bar)
    n = market_shares(params, d, s.profile)
    assert n[0] == pytest.approx(s.x_tau, abs=1e-9)
    assert sp_profit(params, d, s.profile, 0) == pytest.approx(s.pi1, abs=1e-9)
    assert sp_profit(params, d, s.profile, 1) == pytest.approx(s.pi2, abs=1e-9)


@settings(max_examples=100)
@given(feasible_params())
def test_c_tilde_form(params):
    s = solve_theorem1(params)
    pi1, pi2 = profits_c_tilde_form(params)
    assert pi1 == pytest.approx(s.pi1, abs=1e-9)
    assert pi2 == pytest.approx(s.pi2, abs=1e-9)


@settings(max_examples=100)
@given(feasible_params())
def test_coverage_condition(params):
    s = solve_theorem1(params)
    assert s.v1 - params.t * (s.eps1 / params.eps_bar) * s.eps1 >= -1e-9


def test_profits_monotone_in_c_tilde():
    # p2 - p1 fixed, C~ moved through t and eps_bar; keep feasible points only
    pts = []
    for t in np.linspace(0.55, 0.95, 9):
        for eb in np.linspace(2.0, 8.0, 13):
            p = MarketParams(c=0.5, lam=0.75, r=0.7, t=t, eps_bar=eb, p=(0.4, 0.8))
            if check_feasibility(p).all_feasible:
                s = solve_theorem1(p)
                pts.append((p.c_tilde, s.pi1, s.pi2))
    pts.sort()
    assert len(pts) > 10
    arr = np.array(pts)
    assert np.all(np.diff(arr[:, 1]) >= -1e-12)
    assert np.all(np.diff(arr[:, 2]) >= -1e-12)


def test_stage2_qos_matches_theorem(table1, thm1):
    v1, v2 = stage2_qos(table1, thm1.eps1, thm1.eps2)
    assert v1 == pytest.approx(thm1.v1, abs=1e-9) and v2 == pytest.approx(thm1.v2, abs=1e-9)


@settings(max_examples=100)
@given(st.floats(0, 2.4), st.floats(2.6, 5))
def test_stage2_best_response_pair(e1, e2):
    p = MarketParams.table1()
    c, r, lam, t, eb = p.c, p.r, p.lam, p.t, p.eps_bar
    x1, x2 = e1 / eb, e2 / eb
    v1, v2 = stage2_qos(p, e1, e2)
    assert v1 == pytest.approx((r * e1 + p.p[0]) / (2 * c) + (v2 - lam * e1 - t * x2 * e2 + t * x1 * e1) / 2, abs=1e-9)
    twin = (r * e2 + p.p[1]) / (2 * c) + (v1 - lam * e2 - t * (e2 - e1) + t * x2 * e2 - t * x1 * e1) / 2
    assert v2 == pytest.approx(twin, abs=1e-9)


@settings(max_examples=100)
@given(st.floats(0, 2.4), st.floats(2.6, 5))
def test_stage2_own_qos_foc(e1, e2):
    p = MarketParams.table1()
    d = RiskDistribution.uniform(p.eps_bar)
    v = np.array(stage2_qos(p, e1, e2))
    n = market_shares(p, d, StrategyProfile.from_arrays([e1, e2], v))
    assume(0.01 < n[0] < 0.99)
    h = 1e-5
    for i in range(2):
        up, dn = v.copy(), v.copy()
        up[i] += h
        dn[i] -= h
        f = lambda w: sp_profit(p, d, StrategyProfile.from_arrays([e1, e2], w), i)
        assert (f(up) - f(dn)) / (2 * h) == pytest.approx(0.0, abs=1e-6)


def test_stage2_degenerate(table1):
    with pytest.raises(DegenerateDifferentiation):
        stage2_qos(table1, 2.0, 2.0)
    with pytest.raises(DegenerateDifferentiation):
        stage2_qos(table1, 3.0, 2.0)


def test_reduced_profits_at_equilibrium(table1, thm1):
    pi1, pi2 = stage1_reduced_profits(table1, thm1.eps1, thm1.eps2)
    assert pi1 == pytest.approx(thm1.pi1, abs=1e-9) and pi2 == pytest.approx(thm1.pi2, abs=1e-9)


def test_reduced_profits_pipeline_equivalence(table1, uniform5):
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 100:
        e1, e2 = np.sort(rng.uniform(0, 5, 2))
        if e2 - e1 < 0.5:
            continue
        v = stage2_qos(table1, e1, e2)
        prof = StrategyProfile.from_arrays([e1, e2], v)
        n = market_shares(table1, uniform5, prof)
        if not 0 < n[0] < 1:
            continue  # the reduced form assumes an interior split
        checked += 1
        pi = stage1_reduced_profits(table1, e1, e2)
        assert pi[0] == pytest.approx(sp_profit(table1, uniform5, prof, 0), abs=1e-9)
        assert pi[1] == pytest.approx(sp_profit(table1, uniform5, prof, 1), abs=1e-9)


def test_dominated_root_gives_zero_profit(table1):
    from scipy.optimize import brentq
    e1 = 1.0
    f2 = lambda e2: stage1_dominated_factors(table1, e1, e2)[1]
    f1 = lambda x: stage1_dominated_factors(table1, x, 4.0)[0]
    # sp1's factor changes sign as eps1 moves toward sp2
    root = brentq(f1, 0.0, 3.99)
    assert stage1_reduced_profits(table1, root, 4.0)[0] == pytest.approx(0.0, abs=1e-12)
    assert f2(4.0) != 0.0


def test_foc_residuals(table1, thm1):
    r1, r2 = stage1_foc_residuals(table1, thm1.eps1, thm1.eps2)
    assert r1 == pytest.approx(0.0, abs=1e-9) and r2 == pytest.approx(0.0, abs=1e-9)
    assert abs(stage1_foc_residuals(table1, thm1.eps1 + 0.1, thm1.eps2)[0]) > 1e-3


def test_foc_sign_matches_finite_differences():
    rng = np.random.default_rng(5)
    n = 0
    while n < 100:
        t, eb, p1, d = rng.uniform(0.55, 0.95), rng.uniform(3, 6), rng.uniform(0.2, 0.6), rng.uniform(0, 0.5)
        p = MarketParams(c=0.5, lam=0.75, r=0.7, t=t, eps_bar=eb, p=(p1, p1 + d))
        e1, e2 = np.sort(rng.uniform(0, eb, 2))
        if e2 - e1 < 0.1 * eb:
            continue
        f1, f2 = stage1_dominated_factors(p, e1, e2)
        r1, r2 = stage1_foc_residuals(p, e1, e2)
        h = 1e-6
        g1 = (stage1_reduced_profits(p, e1 + h, e2)[0] - stage1_reduced_profits(p, e1 - h, e2)[0]) / (2 * h)
        g2 = (stage1_reduced_profits(p, e1, e2 + h)[1] - stage1_reduced_profits(p, e1, e2 - h)[1]) / (2 * h)
        k = p.c / (9 * p.t * (e2 - e1) ** 2)
        assert g1 == pytest.approx(k * f1 * r1, rel=1e-5, abs=1e-8)
        assert g2 == pytest.approx(k * f2 * r2, rel=1e-5, abs=1e-8)
        if abs(g1) > 1e-6:
            assert np.sign(g1) == np.sign(f1 * r1)
        n += 1
