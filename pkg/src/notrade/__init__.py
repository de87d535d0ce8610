"""Optimal trading with small proportional transaction costs.

Closed-form frictionless policies, no-trade band asymptotics for welfare,
turnover, mean-variance and growth, and a Monte Carlo engine that follows
the band on simulated paths to check the forecasts.
"""

from .asymptotics import (
    GrowthReport,
    MeanVarianceReport,
    NoTradeBand,
    Parametrization,
    TurnoverForecast,
    WelfareReport,
    ce_loss,
    crra_band_fraction,
    growth_rate_reduction,
    mean_variance_report,
    no_trade_band,
    optimal_turnover_rate,
    turnover_forecast,
)
from .frictionless import FrictionlessSolution, UnsupportedPairError, bsde_residual, solve_frictionless
from .market import MarketModel, ModelKind, PathBundle, PathGrid, SpreadMode, SpreadModel, simulate_paths
from .preferences import Family, Preferences
from .simulator import FrictionSimResult, SimOptions, run_frictional, simulate_policy

__version__ = "0.1.0"

__all__ = [
    "GrowthReport",
    "MeanVarianceReport",
    "NoTradeBand",
    "Parametrization",
    "TurnoverForecast",
    "WelfareReport",
    "ce_loss",
    "crra_band_fraction",
    "growth_rate_reduction",
    "mean_variance_report",
    "no_trade_band",
    "optimal_turnover_rate",
    "turnover_forecast",
    "FrictionlessSolution",
    "UnsupportedPairError",
    "bsde_residual",
    "solve_frictionless",
    "MarketModel",
    "ModelKind",
    "PathBundle",
    "PathGrid",
    "SpreadMode",
    "SpreadModel",
    "simulate_paths",
    "Family",
    "Preferences",
    "FrictionSimResult",
    "SimOptions",
    "run_frictional",
    "simulate_policy",
]
