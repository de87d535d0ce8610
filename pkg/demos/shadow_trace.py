"""Trace one frictional path and its shadow-price diagnostics.

Simulates a handful of paths at eta = 0.01 from a stationary start, prints
the shadow-price containment check and the number of purchases and sales on
the first path, then dumps that path's position, band midpoint and
halfwidth every 100 steps.

Run with ``python3 demos/shadow_trace.py``.
"""

import numpy as np

from notrade.market import MarketModel, PathGrid, SpreadModel
from notrade.preferences import Preferences
from notrade.simulator import SimOptions, simulate_policy

(res,) = simulate_policy(
    MarketModel(mu=0.08, sigma=0.2),
    Preferences.power(5.0),
    SpreadModel(eta0=0.01),
    PathGrid(1.0, 1000, 64, seed=9),
    1.0,
    (0.01,),
    SimOptions(initial_position="stationary", trace_paths=1),
)
print(f"containment violations: {res.shadow.containment_violations}")
print(f"boundary touch error:   {res.shadow.boundary_touch_error:.2e}")
print(f"purchases/sales ratio:  {res.purchase_sale_ratio:.3f}")

phi, mid, h, x_eps, cost, side = res.outcomes.trace[0]
print(f"steps with a purchase / sale on path 0: {np.sum(side > 0)} / {np.sum(side < 0)}")
print(f"{'step':>5} {'phi':>9} {'mid':>9} {'half':>9} {'wealth':>9}")
for k in range(0, phi.size, 100):
    print(f"{k:5d} {phi[k]:9.5f} {mid[k]:9.5f} {h[k]:9.5f} {x_eps[k]:9.5f}")
