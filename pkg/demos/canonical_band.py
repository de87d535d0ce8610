"""Closed-form band, welfare and turnover forecasts for the canonical market.

Black-Scholes with mu = 0.08, sigma = 0.2 and power utility with gamma = 5,
so the Merton fraction is 0.4. Prints the forecasts for a few spreads; the
columns scale as eta^(1/3), eta^(2/3) and eta^(-1/3).

Run with ``python3 demos/canonical_band.py``.
"""

from notrade.asymptotics import ce_loss, crra_band_fraction, no_trade_band, turnover_forecast
from notrade.frictionless import solve_frictionless
from notrade.market import MarketModel, PathGrid, SpreadModel, simulate_paths
from notrade.preferences import Preferences

model = MarketModel(mu=0.08, sigma=0.2)
pref = Preferences.power(5.0)

print(f"{'eta':>8} {'halfwidth':>11} {'ce loss':>11} {'turnover':>10}")
for eta in (0.0025, 0.005, 0.01, 0.02):
    paths = simulate_paths(model, SpreadModel(eta0=eta), PathGrid(1.0, 200, 256, seed=1))
    sol = solve_frictionless(model, pref, paths, 1.0)
    band = no_trade_band(sol, model, paths.spread_halfwidth)
    h = crra_band_fraction(sol, model, eta).halfwidth[0, 0]
    w = ce_loss(sol, band, paths).ce_loss_fraction
    t = turnover_forecast(sol, band, paths).absolute_share_turnover
    print(f"{eta:8.4f} {h:11.6f} {w:11.4e} {t:10.4f}")
