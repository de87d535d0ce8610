"""Reduced-size spread sweep comparing simulated and forecast quantities.

Uses 4096 paths of 2000 steps, which runs in well under a minute. The
full-size version of this comparison lives in tests/test_acceptance.py.

Run with ``python3 demos/small_sweep.py [out_dir]``; the CSV and JSON
outputs are written to ``out_dir`` when it is given.
"""

import sys

from notrade.experiments import BaseConfig, SweepSpec, compare_report, run_sweep, write_sweep
from notrade.market import MarketModel, PathGrid, SpreadModel
from notrade.preferences import Preferences
from notrade.simulator import SimOptions

options = SimOptions(liquidate_at_T=False, charge_initial_trade=False, initial_position="stationary")
base = BaseConfig(
    MarketModel(mu=0.08, sigma=0.2),
    Preferences.power(5.0),
    SpreadModel(),
    PathGrid(1.0, 2000, 4096, seed=3),
    1.0,
    options,
)
sweep = run_sweep(SweepSpec((0.0025, 0.005, 0.01, 0.02), base))
report = compare_report(sweep)
print(report.table)
for name, reg in sweep.regressions.items():
    print(f"{name:>22}: slope {reg.slope:+.3f}")
if len(sys.argv) > 1:
    for p in write_sweep(sweep, sys.argv[1]):
        print("wrote", p)
