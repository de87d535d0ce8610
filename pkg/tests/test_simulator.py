import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from notrade.asymptotics import NoTradeBand, Parametrization
from notrade.frictionless import solve_frictionless
from notrade.market import MarketModel, PathGrid, SpreadModel, simulate_paths
from notrade.preferences import Preferences
from notrade.simulator import (
    NumericalFailure,
    SimOptions,
    build_band,
    growth_rate_measurement,
    loss_decomposition,
    realized_turnover_stats,
    run_frictional,
    shadow_diagnostics,
    simulate_policy,
)

BS = MarketModel(mu=0.08, sigma=0.2)
P5 = Preferences.power(5.0)
STAT = SimOptions(liquidate_at_T=False, charge_initial_trade=False, initial_position="stationary")


def run(model=BS, pref=P5, eta=0.01, n=400, N=256, seed=0, options=SimOptions(), band=None, x0=1.0):
    p = simulate_paths(model, SpreadModel(eta0=eta), PathGrid(1.0, n, N, seed))
    sol = solve_frictionless(model, pref, p, x0)
    band = build_band(sol, p, options) if band is None else band
    return run_frictional(sol, band, p, pref, x0, options), sol, p


def test_zero_spread_tracks_frictionless_policy():
    r, sol, p = run(eta=0.0)
    assert r.mean_cost == 0
    assert abs(r.realized_ce_loss) < 1e-4
    assert r.loss_direct_cost == 0
    assert r.confinement_violations == 0


def test_zero_drift_never_trades():
    r, sol, p = run(model=MarketModel(mu=0.0, sigma=0.2))
    assert r.realized_turnover == 0
    assert r.mean_cost == 0
    assert r.outcomes.trades.sum() == 0


@pytest.mark.parametrize(
    "pref, x0",
    [
        (P5, 1.0),
        (Preferences.power(3.0, beta=1.0, delta=0.05), 1.0),
        (Preferences.log(beta=0.5), 2.0),
        (Preferences.exponential(2.0, 2.0, beta=1.0), 1.0),
        (Preferences.quadratic(), -1.0),
    ],
    ids=["power", "power-cons", "log-cons", "exp-cons", "quad"],
)
def test_accounting_confinement_and_shadow_price(pref, x0):
    r, sol, p = run(pref=pref, x0=x0, N=64)
    assert r.accounting_error_max < 1e-10
    assert r.consumption_error_max < 1e-10
    assert r.confinement_violations == 0
    assert r.shadow.containment_violations == 0
    assert r.shadow.boundary_touch_error < 1e-9
    assert r.bankruptcies == 0
    o = r.outcomes
    assert np.all(o.purchases >= 0) and np.all(o.sales >= 0)


def test_costs_paid_match_turnover():
    # absolute spread: cost = eps * shares traded (turnover excludes entry and exit)
    sp = SpreadModel("AbsoluteConstant", eta0=0.01)
    p = simulate_paths(BS, sp, PathGrid(1.0, 200, 32, 1))
    sol = solve_frictionless(BS, P5, p, 1.0)
    opts = SimOptions(liquidate_at_T=False, charge_initial_trade=False, band="shares")
    r = run_frictional(sol, build_band(sol, p, opts), p, P5, 1.0, opts)
    o = r.outcomes
    assert np.allclose(o.cost, 0.01 * (o.purchases + o.sales), rtol=1e-12)


def test_split_components_sum_to_total():
    r, sol, p = run(N=512, options=STAT)
    assert abs(r.realized_ce_loss_split_check) < 1e-12
    assert r.loss_direct_cost > 0
    d, m = loss_decomposition(sol, build_band(sol, p, STAT), p, P5, 1.0, STAT)
    assert d == r.loss_direct_cost and m == r.loss_displacement


def test_loss_monotone_in_spread_with_common_paths():
    res = simulate_policy(BS, P5, SpreadModel(), PathGrid(1.0, 500, 512, 3), 1.0, [0.0025, 0.005, 0.01, 0.02], STAT)
    losses = [r.realized_ce_loss for r in res]
    assert all(a <= b for a, b in zip(losses, losses[1:]))
    costs = [r.mean_cost for r in res]
    assert all(a < b for a, b in zip(costs, costs[1:]))


def test_results_do_not_depend_on_block_size():
    g = PathGrid(1.0, 100, 48, 4)
    a = simulate_policy(BS, P5, SpreadModel(), g, 1.0, [0.005, 0.01], STAT, block_paths=7)
    b = simulate_policy(BS, P5, SpreadModel(), g, 1.0, [0.005, 0.01], STAT, block_paths=48)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.outcomes.x_eps, rb.outcomes.x_eps)
        assert ra.realized_ce_loss == rb.realized_ce_loss
        assert ra.predicted_welfare.ce_loss == pytest.approx(rb.predicted_welfare.ce_loss, rel=1e-13)


def test_batched_predictions_match_direct_forecast():
    g = PathGrid(1.0, 100, 32, 5)
    a, b = simulate_policy(BS, P5, SpreadModel(), g, 1.0, [0.004, 0.013], STAT)
    r, sol, p = run(eta=0.013, n=100, N=32, seed=5, options=STAT)
    assert b.predicted_welfare.ce_loss == pytest.approx(r.predicted_welfare.ce_loss, rel=1e-12)
    assert b.predicted_turnover.absolute_share_turnover == pytest.approx(
        r.predicted_turnover.absolute_share_turnover, rel=1e-12
    )
    assert np.allclose(b.outcomes.x_eps, r.outcomes.x_eps, rtol=1e-13)


def test_turnover_comparison_table():
    r, sol, p = run(eta=0.0025, n=2000, N=256, options=STAT)
    cmp = realized_turnover_stats(r)
    assert cmp.quantity == ["absolute_share_turnover", "relative_share_turnover", "relative_wealth_turnover"]
    for ratio in cmp.ratio:
        assert ratio == pytest.approx(1.0, abs=0.15)
    assert cmp.purchase_sale_ratio == r.purchase_sale_ratio


def test_halfwidth_ratio_near_one_on_fine_grid():
    r, sol, p = run(eta=0.01, n=2000, N=128, options=STAT)
    assert r.halfwidth_ratio == pytest.approx(1.0, abs=0.05)


def test_overshoot_moves_inside_band():
    r, sol, p = run(N=32, options=SimOptions(overshoot=0.5))
    assert r.confinement_violations == 0
    assert np.nanmax(r.outcomes.max_abs_deviation) <= 1.0 + 1e-12


def test_trace_records_leading_paths():
    r, sol, p = run(n=50, N=8, options=SimOptions(trace_paths=3))
    tr = r.outcomes.trace
    assert tr.shape == (3, 6, 51)
    # phi_eps stays within the band recorded alongside it
    assert np.all(np.abs(tr[:, 0, 1:] - tr[:, 1, 1:]) <= tr[:, 2, 1:] * (1 + 1e-12) + 1e-15)


def test_fraction_band_requires_crra():
    pref = Preferences.exponential(1.0, 1.0)
    p = simulate_paths(BS, SpreadModel(), PathGrid(1.0, 10, 4, 0))
    sol = solve_frictionless(BS, pref, p, 1.0)
    band = NoTradeBand(np.zeros_like(sol.wealth), np.zeros_like(sol.wealth), Parametrization.FRACTION)
    with pytest.raises(ValueError):
        run_frictional(sol, band, p, pref, 1.0)


def test_option_validation():
    with pytest.raises(ValueError):
        SimOptions(overshoot=1.0)
    with pytest.raises(ValueError):
        SimOptions(band="weights")
    with pytest.raises(ValueError):
        SimOptions(initial_position="random")


def test_bankruptcy_rate_guard():
    # heavily levered log investor with a wide spread goes bust on some paths
    m = MarketModel(mu=0.3, sigma=0.2)
    with pytest.raises(NumericalFailure):
        simulate_policy(m, Preferences.log(), SpreadModel(eta0=0.5), PathGrid(1.0, 50, 64, 0), 1.0,
                        options=SimOptions(max_bankruptcy_rate=0.0))
    r = simulate_policy(m, Preferences.log(), SpreadModel(eta0=0.5), PathGrid(1.0, 50, 64, 0), 1.0,
                        options=SimOptions(max_bankruptcy_rate=1.0))[0]
    assert r.bankruptcies > 0
    assert r.n_paths + r.bankruptcies == 64
    assert np.isfinite(r.realized_ce_loss)


def test_growth_frictionless_rate_and_zero_spread():
    m = simulate_paths  # keep name lookups local
    g = growth_rate_measurement(BS, Preferences.log(), SpreadModel(eta0=0.0), PathGrid(50.0, 5000, 200, 1))
    assert abs(g.frictionless_rate - 0.08) < 3 * g.frictionless_rate_stderr
    assert g.theoretical_frictionless_rate == pytest.approx(0.08)
    assert abs(g.reduction) < 1e-3
    with pytest.raises(ValueError):
        growth_rate_measurement(BS, P5, SpreadModel(), PathGrid(1.0, 10, 4, 0))


# shadow price polynomial


def _shadow_inputs(d, h, eps, R=1.0):
    G = h**3 / (1.5 * R * eps)  # so that cbrt(1.5 R G eps) = h
    one = np.ones_like(d)
    return dict(
        phi_eps=d,
        midpoint=0 * d,
        halfwidth=h * one,
        R=R * one,
        gamma_ratio=G * one,
        eps=eps * one,
    )


def test_shadow_price_at_center_and_boundaries():
    h, eps = 0.3, 0.02
    d = np.array([0.0, -h, h])
    side = np.array([0.0, 1.0, -1.0])
    s = shadow_diagnostics(side=side, **_shadow_inputs(d, h, eps))
    assert s.shadow_price[0] == 0
    assert s.shadow_price[1] == pytest.approx(eps, rel=1e-12)
    assert s.shadow_price[2] == pytest.approx(-eps, rel=1e-12)
    assert s.boundary_touch_error < 1e-15
    assert s.containment_violations == 0


@settings(max_examples=100, deadline=None)
@given(
    u=st.floats(-0.999, 0.999),
    h=st.floats(1e-4, 10.0),
    eps=st.floats(1e-5, 1.0),
    R=st.floats(1e-3, 100.0),
)
def test_shadow_price_strictly_inside_spread(u, h, eps, R):
    d = np.array([u * h])
    s = shadow_diagnostics(side=np.zeros(1), **_shadow_inputs(d, h, eps, R))
    assert abs(s.shadow_price[0]) < eps


def test_shadow_not_applicable_without_gamma():
    d = np.array([0.1])
    s = shadow_diagnostics(d, 0 * d, 0 * d + 0.2, np.array([1.0]), np.ones(1), np.zeros(1), 0.01 + 0 * d)
    assert s.not_applicable == 1 and s.containment_violations == 0
