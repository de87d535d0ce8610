import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from notrade.asymptotics import (
    NoTradeBand,
    Parametrization,
    band_in_fraction,
    ce_loss,
    crra_band_fraction,
    crra_halfwidth,
    growth_rate_reduction,
    mean_variance_report,
    merge_reports,
    no_trade_band,
    optimal_turnover_rate,
    turnover_forecast,
    turnover_rate_from_band,
)
from notrade.frictionless import crra_bracket, portfolio_gamma, solve_frictionless
from notrade.market import MarketModel, PathGrid, SpreadModel, simulate_paths
from notrade.preferences import Preferences

mp.mp.dps = 40
BS = MarketModel(mu=0.08, sigma=0.2)


def oracle_halfwidth(eta, gamma, pi):
    eta, gamma, pi = mp.mpf(eta), mp.mpf(gamma), mp.mpf(pi)
    return mp.cbrt(3 * eta / (2 * gamma) * (pi * (1 - pi)) ** 2)


def setup(model=BS, pref=Preferences.power(5.0), eta=0.01, n=100, N=32, seed=0, T=1.0):
    p = simulate_paths(model, SpreadModel(eta0=eta), PathGrid(T, n, N, seed))
    return p, solve_frictionless(model, pref, p, 1.0)


def test_fraction_halfwidth_canonical():
    p, sol = setup()
    band = crra_band_fraction(sol, BS, 0.01)
    want = float(oracle_halfwidth("0.01", 5, "0.4"))
    assert want == pytest.approx(0.05569, abs=1e-5)
    assert np.allclose(band.halfwidth, want, rtol=1e-13)
    assert band.parametrization is Parametrization.FRACTION
    assert np.allclose(band.midpoint, 0.4)


def test_share_band_matches_fraction_band_identically():
    p, sol = setup(n=50, N=16)
    shares = no_trade_band(sol, BS, p.spread_halfwidth)
    frac = crra_band_fraction(sol, BS, 0.01)
    conv = band_in_fraction(shares, sol)
    assert np.max(np.abs(conv.halfwidth / frac.halfwidth - 1)) < 1e-12
    assert np.max(np.abs(conv.midpoint / frac.midpoint - 1)) < 1e-12


def test_band_collapses_without_risky_position_or_at_full_investment():
    p = simulate_paths(MarketModel(mu=0.0), SpreadModel(), PathGrid(1.0, 10, 4, 0))
    sol = solve_frictionless(MarketModel(mu=0.0), Preferences.power(2.0), p, 1.0)
    assert np.all(no_trade_band(sol, sol.model, p.spread_halfwidth).halfwidth == 0)
    pi = np.array([0.0, 1.0, 0.5])
    assert np.array_equal(crra_halfwidth(0.01, 3.0, crra_bracket(pi, BS)) == 0, [True, True, False])


def test_cube_root_in_spread():
    p, sol = setup(n=10, N=4)
    a = no_trade_band(sol, BS, p.spread_halfwidth).halfwidth
    b = no_trade_band(sol, BS, 8 * p.spread_halfwidth).halfwidth
    assert np.allclose(b / a, 2.0, rtol=1e-14)


def test_frictional_wealth_shifts_midpoint():
    p, sol = setup(n=10, N=4)
    xe = sol.wealth * 0.99
    band = no_trade_band(sol, BS, p.spread_halfwidth, frictional_wealth=xe)
    assert np.allclose(band.midpoint, sol.shares * 0.99)


def test_mean_reverting_bracket_exceeds_constant_weight_bracket():
    m = MarketModel("MeanRevertingDrift", mu=0.05, sigma=0.2, kappa_factor=2.0, nu_factor=0.01, rho=0.0)
    p, sol = setup(m, Preferences.log(), n=2000, N=200, seed=1)
    br = crra_bracket(sol.risky_weight, m)
    base = (sol.risky_weight * (1 - sol.risky_weight)) ** 2
    assert np.all(br > base)
    # the factor term equals the realized quadratic variation rate of pi
    dpi = np.diff(sol.risky_weight, axis=1)
    qv_rate = np.sum(dpi**2) / (dpi.size * p.dt)
    assert qv_rate / 0.04 == pytest.approx(0.01**2 / 0.2**6, rel=0.02)


def test_ce_loss_deterministic_integrand():
    p, sol = setup()
    rep = ce_loss(sol, crra_band_fraction(sol, BS, 0.01))
    dpi = oracle_halfwidth("0.01", 5, "0.4")
    want = float(mp.mpf(5) / 2 * dpi**2 * mp.mpf("0.04"))
    assert want == pytest.approx(3.101e-4, abs=2e-7)
    assert rep.ce_loss_fraction == pytest.approx(want, rel=1e-12)
    assert rep.esr_reduction == pytest.approx(want, rel=1e-12)
    assert rep.split_cost == pytest.approx(2 * rep.ce_loss / 3)
    assert rep.split_displacement == pytest.approx(rep.ce_loss / 3)
    # Q-average of X_t * (leading fraction) for homothetic utility
    assert rep.ce_loss == pytest.approx(want, rel=0.05)


def test_ce_loss_zero_spread():
    p, sol = setup(eta=0.0)
    rep = ce_loss(sol, no_trade_band(sol, BS, p.spread_halfwidth))
    assert rep.ce_loss == 0 and rep.ce_loss_fraction == 0


def test_ce_loss_linear_in_capital():
    p, sol = setup(n=20, N=16)
    sol2 = solve_frictionless(BS, Preferences.power(5.0), p, 3.0)
    a = ce_loss(sol, no_trade_band(sol, BS, p.spread_halfwidth)).ce_loss
    b = ce_loss(sol2, no_trade_band(sol2, BS, p.spread_halfwidth)).ce_loss
    assert b == pytest.approx(3 * a, rel=1e-12)


def test_ce_loss_rejects_mismatched_band():
    p, sol = setup(n=10, N=4)
    with pytest.raises(ValueError):
        ce_loss(sol, NoTradeBand(np.zeros((1, 1)), np.zeros((1, 1)), Parametrization.SHARES))


def test_turnover_scaling_for_tighter_spread():
    p, sol = setup(n=50, N=16)
    a = turnover_forecast(sol, no_trade_band(sol, BS, p.spread_halfwidth))
    b = turnover_forecast(sol, no_trade_band(sol, BS, 0.9 * p.spread_halfwidth))
    for f in ("absolute_share_turnover", "relative_share_turnover", "relative_wealth_turnover"):
        assert getattr(b, f) / getattr(a, f) == pytest.approx(0.9 ** (-1 / 3), rel=1e-12)
    assert 0.9 ** (-1 / 3) == pytest.approx(1.0357, abs=1e-4)


def test_turnover_zero_without_position():
    p = simulate_paths(MarketModel(mu=0.0), SpreadModel(), PathGrid(1.0, 10, 4, 0))
    sol = solve_frictionless(MarketModel(mu=0.0), Preferences.power(2.0), p, 1.0)
    t = turnover_forecast(sol, no_trade_band(sol, sol.model, p.spread_halfwidth))
    assert t.absolute_share_turnover == 0 and t.relative_share_turnover == 0 and t.relative_wealth_turnover == 0


def test_wealth_turnover_is_weight_times_share_turnover():
    p, sol = setup(n=20, N=8)
    t = turnover_forecast(sol, crra_band_fraction(sol, BS, 0.01))
    assert t.relative_wealth_turnover == pytest.approx(0.4 * t.relative_share_turnover, rel=1e-12)


def test_optimal_turnover_identity_at_random_points():
    rng = np.random.default_rng(5)
    eps = rng.uniform(1e-5, 0.1, 100)
    R = rng.uniform(0.01, 10, 100)
    g = rng.uniform(1e-4, 10, 100)
    cS = rng.uniform(1e-3, 10, 100)
    half = np.cbrt(1.5 * R * g * eps)
    via_band = turnover_rate_from_band(g * cS, half)
    direct = optimal_turnover_rate(eps, R, g, cS)
    assert np.max(np.abs(direct / via_band - 1)) < 1e-12


def test_optimal_turnover_degenerate_band():
    assert optimal_turnover_rate(0.0, 1.0, 1.0, 1.0) == 0
    assert optimal_turnover_rate(0.01, 1.0, 0.0, 1.0) == 0
    assert turnover_rate_from_band(1.0, 0.0) == 0


def test_growth_reduction_explicit_band():
    p, sol = setup(pref=Preferences.log(), n=10, N=4)
    band = NoTradeBand(sol.risky_weight, np.full(sol.risky_weight.shape, 0.05569), Parametrization.FRACTION)
    g = growth_rate_reduction(sol, band)
    assert g.rate_reduction == pytest.approx(0.04 * 0.05569**2 / 2, rel=1e-12)
    assert g.rate_reduction == pytest.approx(6.203e-5, abs=5e-9)


def test_growth_reduction_log_band_and_scaling():
    p, sol = setup(pref=Preferences.log(), n=10, N=4)
    a = growth_rate_reduction(sol, crra_band_fraction(sol, BS, 0.01)).rate_reduction
    b = growth_rate_reduction(sol, crra_band_fraction(sol, BS, 0.08)).rate_reduction
    z = growth_rate_reduction(sol, crra_band_fraction(sol, BS, 0.0)).rate_reduction
    assert b / a == pytest.approx(4.0, rel=1e-12)
    assert z == 0
    assert a == pytest.approx(0.02 * mp.cbrt(0.06) ** 2, rel=1e-12)


def test_growth_reduction_requires_log_and_fraction():
    p, sol = setup(n=10, N=4)
    with pytest.raises(ValueError):
        growth_rate_reduction(sol, crra_band_fraction(sol, BS, 0.01))
    p, sol = setup(pref=Preferences.log(), n=10, N=4)
    with pytest.raises(ValueError):
        growth_rate_reduction(sol, no_trade_band(sol, BS, p.spread_halfwidth))


def test_crra_band_requires_crra():
    p, sol = setup(pref=Preferences.exponential(1.0, 1.0), n=10, N=4)
    with pytest.raises(ValueError):
        crra_band_fraction(sol, BS, 0.01)


def test_sharpe_ratio_closed_form():
    p = simulate_paths(BS, SpreadModel(eta0=0.0), PathGrid(1.0, 50, 64, 0))
    rep = mean_variance_report(BS, 1.0, ("mean", 1.5), SpreadModel(eta0=0.0), p)
    want = float(mp.sqrt(mp.exp(mp.mpf("0.16")) - 1))
    assert rep.sharpe_frictionless == pytest.approx(want, rel=1e-13)
    assert want == pytest.approx(0.4165, abs=5e-5)
    assert rep.sharpe_frictional == rep.sharpe_frictionless
    assert rep.multiplier_frictional == pytest.approx(0.5 / (1 + rep.u_minus_one))


def test_sharpe_ratio_by_monte_carlo():
    # terminal wealth of the quadratic hedging portfolio from endowment -1
    p = simulate_paths(BS, SpreadModel(), PathGrid(1.0, 1, 100_000, 9))
    sol = solve_frictionless(BS, Preferences.quadratic(), p, -1.0)
    x = sol.wealth[:, -1]
    sr = (x.mean() + 1) / x.std(ddof=1)
    assert sr == pytest.approx(0.4165, rel=0.03)


def test_mean_variance_scaling_in_target():
    p = simulate_paths(BS, SpreadModel(eta0=0.005), PathGrid(1.0, 50, 64, 0))
    a = mean_variance_report(BS, 1.0, ("mean", 1.5), SpreadModel(eta0=0.005), p)
    b = mean_variance_report(BS, 1.0, ("mean", 2.0), SpreadModel(eta0=0.005), p)
    assert b.multiplier_frictional == pytest.approx(2 * a.multiplier_frictional, rel=1e-12)
    assert b.min_variance_frictional == pytest.approx(4 * a.min_variance_frictional, rel=1e-12)
    assert b.sharpe_frictional == a.sharpe_frictional
    assert a.sharpe_frictional < a.sharpe_frictionless


def test_mean_variance_variance_target_and_errors():
    p = simulate_paths(BS, SpreadModel(eta0=0.005), PathGrid(1.0, 50, 64, 0))
    r = mean_variance_report(BS, 1.0, ("variance", 0.04), SpreadModel(eta0=0.005), p)
    assert r.max_return_frictionless == pytest.approx(1.0 + 0.2 * r.sharpe_frictionless)
    assert r.max_return_frictional < r.max_return_frictionless
    with pytest.raises(ValueError):
        mean_variance_report(BS, 1.0, ("mean", 0.5), SpreadModel(), p)
    mr = MarketModel("MeanRevertingDrift", mu=0.05, sigma=0.2, kappa_factor=1.0, nu_factor=0.01)
    with pytest.raises(ValueError):
        mean_variance_report(mr, 1.0, ("mean", 1.5), SpreadModel(), p)


def test_merge_equals_single_block():
    p = simulate_paths(BS, SpreadModel(), PathGrid(1.0, 20, 40, 0))
    sol = solve_frictionless(BS, Preferences.power(3.0), p, 1.0)
    whole = ce_loss(sol, no_trade_band(sol, BS, p.spread_halfwidth))
    parts = []
    for ids in (range(0, 15), range(15, 40)):
        q = simulate_paths(BS, SpreadModel(), PathGrid(1.0, 20, 40, 0), path_ids=ids)
        s = solve_frictionless(BS, Preferences.power(3.0), q, 1.0)
        parts.append(ce_loss(s, no_trade_band(s, BS, q.spread_halfwidth)))
    merged = merge_reports(parts)
    assert merged.ce_loss == pytest.approx(whole.ce_loss, rel=1e-12)
    assert merged.ce_loss_stderr == pytest.approx(whole.ce_loss_stderr, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(
    gamma=st.floats(0.5, 20.0),
    pi=st.floats(-1.0, 2.0),
    eta=st.floats(1e-4, 1e-2),
)
def test_power_law_exponents(gamma, pi, eta):
    br = (pi * (1 - pi)) ** 2
    etas = np.geomspace(1e-4, 1e-2, 7)
    h = crra_halfwidth(etas, gamma, br)
    if br == 0:
        assert np.all(h == 0)
        return
    slope = np.polyfit(np.log(etas), np.log(h), 1)[0]
    assert abs(slope - 1 / 3) < 1e-6
    loss = 0.5 * gamma * h**2 * 0.04
    assert abs(np.polyfit(np.log(etas), np.log(loss), 1)[0] - 2 / 3) < 1e-6
    to = turnover_rate_from_band(br * 0.04, h)
    assert abs(np.polyfit(np.log(etas), np.log(to), 1)[0] + 1 / 3) < 1e-6
    assert float(crra_halfwidth(eta, gamma, br)) == pytest.approx(float(oracle_halfwidth(eta, gamma, pi)), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(0.5, 20.0), eta=st.floats(0.0, 0.05))
def test_halfwidth_nonnegative(gamma, eta):
    m = MarketModel(mu=0.06, sigma=0.25)
    p = simulate_paths(m, SpreadModel(eta0=eta), PathGrid(1.0, 5, 3, 1))
    sol = solve_frictionless(m, Preferences.power(gamma), p, 1.0)
    band = no_trade_band(sol, m, p.spread_halfwidth)
    assert np.all(band.halfwidth >= 0)
    assert np.all((band.halfwidth == 0) == (portfolio_gamma(sol, p) * p.spread_halfwidth == 0))
