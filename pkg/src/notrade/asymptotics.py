"""Leading-order small-spread formulas.

Expectations under the pricing measure ``Q`` and the myopic measure ``P_hat``
are estimated on physical-measure paths with self-normalized density
weights, so one path set serves every report. Every report keeps its
per-path ingredients, which lets reports from separate path blocks be merged
exactly (:func:`merge_reports`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .frictionless import FrictionlessSolution, crra_bracket, portfolio_gamma
from .market import MarketModel, PathBundle, SpreadModel, quadratic_variation_rate
from .preferences import Family

__all__ = [
    "Parametrization",
    "NoTradeBand",
    "WeightedSample",
    "WelfareReport",
    "TurnoverForecast",
    "MeanVarianceReport",
    "GrowthReport",
    "crra_halfwidth",
    "no_trade_band",
    "crra_band_fraction",
    "band_in_fraction",
    "ce_loss",
    "turnover_rate_from_band",
    "optimal_turnover_rate",
    "turnover_forecast",
    "mean_variance_report",
    "growth_rate_reduction",
    "merge_reports",
    "trapezoid",
]


class Parametrization(str, enum.Enum):
    SHARES = "Shares"
    FRACTION = "Fraction"


@dataclass
class NoTradeBand:
    """Midpoint and halfwidth per (path, time)."""

    midpoint: NDArray[np.float64]
    halfwidth: NDArray[np.float64]
    parametrization: Parametrization

    @property
    def lower(self) -> NDArray[np.float64]:
        return self.midpoint - self.halfwidth

    @property
    def upper(self) -> NDArray[np.float64]:
        return self.midpoint + self.halfwidth


def trapezoid(y: NDArray[np.float64], dt: float) -> NDArray[np.float64]:
    """Trapezoid rule along the last axis on a uniform grid."""
    return dt * (y[..., 1:].sum(axis=-1) + y[..., :-1].sum(axis=-1)) * 0.5


@dataclass
class WeightedSample:
    """Per-path values with importance weights.

    The estimate is the self-normalized mean ``sum(w f) / sum(w)``.
    """

    values: NDArray[np.float64]
    weights: NDArray[np.float64] | None = None

    @property
    def n(self) -> int:
        return len(self.values)

    def _w(self) -> NDArray[np.float64]:
        return np.ones_like(self.values) if self.weights is None else self.weights

    @property
    def mean(self) -> float:
        if self.n == 0:
            return float("nan")
        w = self._w()
        return float(np.sum(w * self.values) / np.sum(w))

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return float("nan")
        w = self._w()
        m = self.mean
        return float(np.sqrt(np.sum((w * (self.values - m)) ** 2)) / np.sum(w))

    @staticmethod
    def concat(items: Sequence[WeightedSample]) -> WeightedSample:
        vals = np.concatenate([s.values for s in items])
        if all(s.weights is None for s in items):
            return WeightedSample(vals)
        return WeightedSample(vals, np.concatenate([s._w() for s in items]))

    def scaled(self, factor: float) -> WeightedSample:
        return WeightedSample(self.values * factor, self.weights)


def crra_halfwidth(eta: ArrayLike, gamma: float, bracket: ArrayLike) -> NDArray[np.float64]:
    """Fraction-space halfwidth ``(3 eta / (2 gamma) * bracket)**(1/3)``.

    Examples
    --------
    >>> round(float(crra_halfwidth(0.01, 5.0, (0.4 * 0.6) ** 2)), 5)
    0.05569
    """
    return np.cbrt(1.5 * np.asarray(eta, dtype=float) / gamma * np.asarray(bracket, dtype=float))


def no_trade_band(
    sol: FrictionlessSolution,
    model: MarketModel,
    spread_halfwidth: NDArray[np.float64],
    frictional_wealth: NDArray[np.float64] | None = None,
) -> NoTradeBand:
    """Share-space band around the frictionless holdings.

    The midpoint is ``phi + phi' (X_eps - X)``, shifted only when
    ``frictional_wealth`` is given. The halfwidth is
    ``(3 R / 2 * d<phi>/d<S> * eps)**(1/3)``.
    """
    paths = sol.paths
    if paths is None:
        raise ValueError("solution must carry its paths")
    g = portfolio_gamma(sol, paths)
    half = np.cbrt(1.5 * sol.indirect_risk_tolerance * g * np.asarray(spread_halfwidth, dtype=float))
    mid = sol.shares.copy()
    if frictional_wealth is not None:
        mid = mid + sol.sens_investment * (np.asarray(frictional_wealth) - sol.wealth)
    return NoTradeBand(mid, half, Parametrization.SHARES)


def crra_band_fraction(sol: FrictionlessSolution, model: MarketModel, eta: ArrayLike) -> NoTradeBand:
    """Band in risky-fraction space for power and log utility.

    ``eta`` is the relative half-spread, scalar or per (path, time).
    """
    if not sol.pref.is_crra:
        raise ValueError("the fraction band requires power or log utility")
    pi = sol.risky_weight
    half = crra_halfwidth(np.broadcast_to(eta, pi.shape), sol.pref.gamma, crra_bracket(pi, model))
    return NoTradeBand(pi.copy(), half, Parametrization.FRACTION)


def band_in_fraction(band: NoTradeBand, sol: FrictionlessSolution) -> NoTradeBand:
    """Convert a share-space band to risky fractions of frictionless wealth."""
    if band.parametrization is Parametrization.FRACTION:
        return band
    S = sol.paths.mid_price
    X = sol.wealth
    return NoTradeBand(band.midpoint * S / X, band.halfwidth * S / np.abs(X), Parametrization.FRACTION)


def _fraction_halfwidth(band: NoTradeBand, sol: FrictionlessSolution) -> NDArray[np.float64]:
    return band_in_fraction(band, sol).halfwidth


def _share_halfwidth(band: NoTradeBand, sol: FrictionlessSolution) -> NDArray[np.float64]:
    if band.parametrization is Parametrization.SHARES:
        return band.halfwidth
    return band.halfwidth * np.abs(sol.wealth) / sol.paths.mid_price


@dataclass
class WelfareReport:
    """Predicted certainty-equivalent loss.

    ``ce_loss`` is in wealth units, ``ce_loss_fraction`` relative to initial
    capital (CRRA only) and ``esr_reduction`` the equivalent safe rate
    reduction per year (CRRA without consumption).
    """

    ce_loss: float
    ce_loss_fraction: float
    esr_reduction: float
    split_cost: float
    split_displacement: float
    ce_loss_stderr: float
    ce_loss_fraction_stderr: float
    horizon: float = 1.0
    has_esr: bool = True
    sample_q: WeightedSample | None = field(default=None, repr=False)
    sample_hat: WeightedSample | None = field(default=None, repr=False)

    @classmethod
    def from_samples(
        cls, sample_q: WeightedSample, sample_hat: WeightedSample | None, horizon: float, has_esr: bool
    ) -> WelfareReport:
        loss = sample_q.mean
        frac = sample_hat.mean if sample_hat is not None else float("nan")
        return cls(
            ce_loss=loss,
            ce_loss_fraction=frac,
            esr_reduction=frac / horizon if has_esr else float("nan"),
            split_cost=2 * loss / 3,
            split_displacement=loss / 3,
            ce_loss_stderr=sample_q.stderr,
            ce_loss_fraction_stderr=sample_hat.stderr if sample_hat is not None else float("nan"),
            horizon=horizon,
            has_esr=has_esr,
            sample_q=sample_q,
            sample_hat=sample_hat,
        )


def _myopic_weight(sol: FrictionlessSolution) -> NDArray[np.float64]:
    """Terminal density of ``P_hat`` relative to ``P``: ``q_T * E(int pi dY)_T``."""
    paths = sol.paths
    m = sol.model
    pi = sol.risky_weight[:, :-1]
    mu = paths.drift[:, :-1]
    log_e = np.sum(pi * m.sigma * paths.dW + (pi * mu - 0.5 * (pi * m.sigma) ** 2) * paths.dt, axis=1)
    return sol.q_density[:, -1] * np.exp(log_e)


def ce_loss(sol: FrictionlessSolution, band: NoTradeBand, paths: PathBundle | None = None) -> WelfareReport:
    """Leading-order certainty-equivalent loss ``E^Q[int DeltaNT^2 / (2R) d<S>]``.

    Parameters
    ----------
    sol : FrictionlessSolution
    band : NoTradeBand
        Shares or Fraction parametrization; fractions are converted.
    paths : PathBundle, optional
        Defaults to the paths carried by ``sol``.
    """
    paths = sol.paths if paths is None else paths
    if band.halfwidth.shape != sol.wealth.shape:
        raise ValueError("band does not match the frictionless solution grid")
    dt = paths.dt
    T = paths.grid.horizon
    half = _share_halfwidth(band, sol)
    cS = quadratic_variation_rate(paths, "S")
    integrand = half**2 / (2 * sol.indirect_risk_tolerance) * cS
    sample_q = WeightedSample(trapezoid(integrand, dt), sol.q_density[:, -1].copy())
    sample_hat = None
    if sol.pref.is_crra:
        dpi = _fraction_halfwidth(band, sol)
        cY = quadratic_variation_rate(paths, "Y")
        cum_c = np.zeros_like(dpi)
        c = sol.consumption_wealth_ratio
        cum_c[:, 1:] = np.cumsum(0.5 * (c[:, 1:] + c[:, :-1]) * dt, axis=1)
        f = 0.5 * sol.pref.gamma * dpi**2 * cY * np.exp(-cum_c)
        sample_hat = WeightedSample(trapezoid(f, dt), _myopic_weight(sol))
    has_esr = sol.pref.is_crra and not sol.pref.consumes
    return WelfareReport.from_samples(sample_q, sample_hat, T, has_esr)


def turnover_rate_from_band(c_phi: ArrayLike, halfwidth: ArrayLike) -> NDArray[np.float64]:
    """Share turnover rate ``c^phi / (2 DeltaNT)``, zero where the band is degenerate."""
    c = np.asarray(c_phi, dtype=float)
    h = np.asarray(halfwidth, dtype=float)
    out = np.zeros(np.broadcast_shapes(c.shape, h.shape))
    np.divide(c, 2 * h, out=out, where=np.broadcast_to(h > 0, out.shape))
    return out


def optimal_turnover_rate(eps: ArrayLike, R: ArrayLike, gamma_ratio: ArrayLike, c_S: ArrayLike) -> NDArray[np.float64]:
    """Share turnover rate of the optimal band.

    ``eps**(-1/3) * (1 / (12 R))**(1/3) * (d<phi>/d<S>)**(2/3) * c^S``, which
    is ``c^phi / (2 DeltaNT)`` with the optimal halfwidth substituted; zero
    where ``eps`` or the portfolio gamma vanish.
    """
    eps = np.asarray(eps, dtype=float)
    g = np.asarray(gamma_ratio, dtype=float)
    shape = np.broadcast_shapes(eps.shape, g.shape, np.shape(R), np.shape(c_S))
    out = np.zeros(shape)
    ok = np.broadcast_to((eps > 0) & (g > 0), shape)
    val = np.cbrt(1 / (12 * np.asarray(R, dtype=float) * np.where(eps > 0, eps, 1.0))) * np.cbrt(g) ** 2 * c_S
    out[ok] = np.broadcast_to(val, shape)[ok]
    return out


@dataclass
class TurnoverForecast:
    """Predicted turnover over the horizon, averaged across paths.

    Relative turnovers are defined for power and log utility only.
    """

    absolute_share_turnover: float
    relative_share_turnover: float
    relative_wealth_turnover: float
    absolute_share_turnover_stderr: float
    relative_share_turnover_stderr: float
    relative_wealth_turnover_stderr: float
    sample_abs: WeightedSample | None = field(default=None, repr=False)
    sample_sh: WeightedSample | None = field(default=None, repr=False)
    sample_we: WeightedSample | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, a: WeightedSample, sh: WeightedSample | None, we: WeightedSample | None) -> TurnoverForecast:
        nan = float("nan")
        return cls(
            absolute_share_turnover=a.mean,
            relative_share_turnover=sh.mean if sh is not None else nan,
            relative_wealth_turnover=we.mean if we is not None else nan,
            absolute_share_turnover_stderr=a.stderr,
            relative_share_turnover_stderr=sh.stderr if sh is not None else nan,
            relative_wealth_turnover_stderr=we.stderr if we is not None else nan,
            sample_abs=a,
            sample_sh=sh,
            sample_we=we,
        )


def turnover_forecast(sol: FrictionlessSolution, band: NoTradeBand, paths: PathBundle | None = None) -> TurnoverForecast:
    """Pathwise turnover forecasts from the optimal band.

    The band supplies the spread level through its halfwidth, so the
    forecast is consistent with whichever band the simulator follows.
    """
    paths = sol.paths if paths is None else paths
    dt = paths.dt
    g = portfolio_gamma(sol, paths)
    cS = quadratic_variation_rate(paths, "S")
    c_phi = g * cS
    abs_rate = turnover_rate_from_band(c_phi, _share_halfwidth(band, sol))
    a = WeightedSample(trapezoid(abs_rate, dt))
    sh = we = None
    if sol.pref.is_crra:
        pi = sol.risky_weight
        dpi = _fraction_halfwidth(band, sol)
        cY = quadratic_variation_rate(paths, "Y")
        we_rate = turnover_rate_from_band(crra_bracket(pi, sol.model) * cY, dpi)
        sh_rate = np.zeros_like(we_rate)
        np.divide(we_rate, np.abs(pi), out=sh_rate, where=pi != 0)
        sh = WeightedSample(trapezoid(sh_rate, dt))
        we = WeightedSample(trapezoid(we_rate, dt))
    return TurnoverForecast.from_samples(a, sh, we)


class TargetKind(str, enum.Enum):
    MEAN = "mean"
    VARIANCE = "variance"


@dataclass
class MeanVarianceReport:
    """Mean-variance efficient portfolio with and without a small spread.

    ``multiplier_*`` is the number of units of the standardized quadratic
    hedging portfolio held. For a mean target the ``min_variance_*``
    fields are filled, for a variance bound the ``max_return_*`` fields.
    """

    u_minus_one: float
    correction: float
    correction_stderr: float
    sharpe_frictionless: float
    sharpe_frictional: float
    multiplier_frictionless: float
    multiplier_frictional: float
    min_variance_frictionless: float
    min_variance_frictional: float
    max_return_frictionless: float
    max_return_frictional: float
    target_kind: str = "mean"
    target_value: float = float("nan")
    x0: float = 0.0
    sample: WeightedSample | None = field(default=None, repr=False)

    @classmethod
    def build(cls, u1: float, sample: WeightedSample, x0: float, kind: str, value: float) -> MeanVarianceReport:
        kind = TargetKind(kind).value
        K = sample.mean
        sr = float(np.sqrt(-1 / u1 - 1))
        sr_eps = sr - (1 + sr**2) / sr * K
        nan = float("nan")
        mvar = mvar_eps = mret = mret_eps = nan
        if kind == "mean":
            if not value > x0:
                raise ValueError(f"target mean {value} must exceed initial wealth {x0}")
            mult = (value - x0) / (1 + u1)
            mult_eps = mult * (1 + 2 * (-u1) / (1 + u1) * K)
            mvar = (value - x0) ** 2 * (-u1) / (1 + u1)
            mvar_eps = mvar * (1 + 2 / (1 + u1) * K)
        else:
            if not value > 0:
                raise ValueError(f"variance bound must be positive, got {value}")
            s = float(np.sqrt(value))
            u_eps = u1 * (1 + 2 * K)
            mult = s / np.sqrt(-u1 * (1 + u1))
            mult_eps = s / np.sqrt(-u_eps * (1 + u_eps))
            mret = x0 + s * sr
            mret_eps = x0 + s * sr_eps
        return cls(
            u_minus_one=u1,
            correction=K,
            correction_stderr=sample.stderr,
            sharpe_frictionless=sr,
            sharpe_frictional=sr_eps,
            multiplier_frictionless=float(mult),
            multiplier_frictional=float(mult_eps),
            min_variance_frictionless=mvar,
            min_variance_frictional=mvar_eps,
            max_return_frictionless=mret,
            max_return_frictional=mret_eps,
            target_kind=kind,
            target_value=float(value),
            x0=float(x0),
            sample=sample,
        )


def quadratic_value(model: MarketModel, horizon: float) -> float:
    """Maximal expected quadratic utility ``U(-1)`` in the Black-Scholes model."""
    return float(-np.exp(-((model.mu / model.sigma) ** 2) * horizon))


def mean_variance_report(
    model: MarketModel,
    x0: float,
    target: tuple[str, float],
    spread: SpreadModel,
    paths: PathBundle,
) -> MeanVarianceReport:
    """Mean-variance frontier point and its small-spread correction.

    Parameters
    ----------
    model : MarketModel
        Black-Scholes only.
    x0 : float
        Initial wealth of the mean-variance investor.
    target : tuple
        ``("mean", m)`` or ``("variance", s2)``.
    spread : SpreadModel
    paths : PathBundle
        Paths used for the correction term.
    """
    from .frictionless import solve_frictionless
    from .preferences import Preferences

    if not model.is_black_scholes:
        raise ValueError("mean-variance corrections are implemented for the Black-Scholes model")
    if paths.spread != spread:
        paths = paths.with_spread(spread)
    sol = solve_frictionless(model, Preferences.quadratic(), paths, -1.0)
    band = no_trade_band(sol, model, paths.spread_halfwidth)
    rep = ce_loss(sol, band, paths)
    kind, value = target
    return MeanVarianceReport.build(quadratic_value(model, paths.grid.horizon), rep.sample_q, x0, kind, value)


@dataclass
class GrowthReport:
    """Predicted long-run growth-rate loss per year."""

    rate_reduction: float
    rate_reduction_stderr: float
    sample: WeightedSample | None = field(default=None, repr=False)

    @classmethod
    def from_sample(cls, sample: WeightedSample) -> GrowthReport:
        return cls(sample.mean, sample.stderr, sample)


def growth_rate_reduction(sol: FrictionlessSolution, band: NoTradeBand, paths: PathBundle | None = None) -> GrowthReport:
    """Time average of ``DeltaPi^2 / 2 * c^Y`` over the simulated horizon."""
    if sol.pref.family is not Family.LOG:
        raise ValueError("growth-rate reduction requires log utility")
    if band.parametrization is not Parametrization.FRACTION:
        raise ValueError("growth-rate reduction expects a Fraction band")
    paths = sol.paths if paths is None else paths
    cY = quadratic_variation_rate(paths, "Y")
    f = 0.5 * band.halfwidth**2 * cY
    return GrowthReport.from_sample(WeightedSample(trapezoid(f, paths.dt) / paths.grid.horizon))


def merge_reports(reports: Sequence):
    """Combine reports computed on disjoint path blocks, in the given order."""
    if not reports:
        raise ValueError("nothing to merge")
    first = reports[0]

    def cat(name):
        items = [getattr(r, name) for r in reports]
        return None if items[0] is None else WeightedSample.concat(items)

    if isinstance(first, WelfareReport):
        return WelfareReport.from_samples(cat("sample_q"), cat("sample_hat"), first.horizon, first.has_esr)
    if isinstance(first, TurnoverForecast):
        return TurnoverForecast.from_samples(cat("sample_abs"), cat("sample_sh"), cat("sample_we"))
    if isinstance(first, GrowthReport):
        return GrowthReport.from_sample(cat("sample"))
    if isinstance(first, MeanVarianceReport):
        return MeanVarianceReport.build(first.u_minus_one, cat("sample"), first.x0, first.target_kind, first.target_value)
    raise TypeError(f"cannot merge {type(first).__name__}")


def report_dict(report) -> dict:
    """Public fields of a report as a plain dict."""
    return {f.name: getattr(report, f.name) for f in fields(report) if not f.name.startswith("sample")}

