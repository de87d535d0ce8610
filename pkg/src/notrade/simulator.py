"""Monte Carlo execution of the band policy with full cost accounting.

The policy trades the minimal amount needed to keep holdings inside the
no-trade band, buying at the ask ``S + eps`` and selling at the bid
``S - eps``. Welfare is measured against the frictionless optimum on the
same paths: the certainty-equivalent loss is obtained from the utility
difference of the two runs, corrected by a zero-mean control variate and
inverted through the closed-form frictionless value function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import _kernels as K
from .asymptotics import (
    GrowthReport,
    NoTradeBand,
    Parametrization,
    TurnoverForecast,
    WelfareReport,
    ce_loss,
    crra_band_fraction,
    growth_rate_reduction,
    merge_reports,
    no_trade_band,
    turnover_forecast,
)
from .frictionless import FrictionlessSolution, indirect_utility, portfolio_gamma, solve_frictionless
from .market import MarketModel, PathBundle, PathGrid, SpreadModel, simulate_paths
from .preferences import Family, Preferences, utility

__all__ = [
    "StartPosition",
    "SimOptions",
    "PathOutcomes",
    "ShadowDiagnostics",
    "FrictionSimResult",
    "NumericalFailure",
    "build_band",
    "run_frictional",
    "simulate_policy",
    "loss_decomposition",
    "shadow_diagnostics",
    "realized_turnover_stats",
    "growth_rate_measurement",
    "default_block_paths",
    "block_forecasts",
]


class NumericalFailure(RuntimeError):
    """Raised when a run cannot produce meaningful estimates."""


class StartPosition(str, enum.Enum):
    MIDPOINT = "midpoint"
    STATIONARY = "stationary"


@dataclass(frozen=True)
class SimOptions:
    """Conventions of the frictional run.

    Parameters
    ----------
    liquidate_at_T : bool
        Sell the final position at the bid (or buy back at the ask).
    charge_initial_trade : bool
        Pay the spread on the initial purchase out of cash.
    initial_position : StartPosition
        ``midpoint`` starts at the band center. ``stationary`` draws the
        initial deviation uniformly across the band, the long-run law of
        the deviation, so finite-horizon statistics carry no start-up
        transient.
    overshoot : float
        Fraction of the halfwidth by which a rebalance moves past the
        boundary into the band; zero trades exactly to the boundary.
    control_variate : bool
        Use the zero-mean density-weighted gains difference as a control
        variate for the utility gap.
    band : str
        ``auto`` (fraction band for power and log utility, share band
        otherwise), ``shares`` or ``fraction``.
    trace_paths : int
        Number of leading paths whose state is recorded per time step.
    max_bankruptcy_rate : float
        Upper bound on the share of bankrupt paths before the run fails.
    """

    liquidate_at_T: bool = True
    charge_initial_trade: bool = True
    initial_position: StartPosition = StartPosition.MIDPOINT
    overshoot: float = 0.0
    control_variate: bool = True
    band: str = "auto"
    trace_paths: int = 0
    max_bankruptcy_rate: float = 1e-3

    def __post_init__(self) -> None:
        object.__setattr__(self, "initial_position", StartPosition(self.initial_position))
        if not 0.0 <= self.overshoot < 1.0:
            raise ValueError("overshoot must lie in [0, 1)")
        if self.band not in ("auto", "shares", "fraction"):
            raise ValueError(f"unknown band parametrization {self.band!r}")
        if self.trace_paths < 0:
            raise ValueError("trace_paths must be non-negative")


_OUT_NAMES = [
    "x_eps",
    "x_mid",
    "cost",
    "purchases",
    "sales",
    "share_turnover",
    "wealth_turnover",
    "gains_dev",
    "cons_util_eps",
    "accounting_error",
    "confinement_violations",
    "containment_violations",
    "touch_error",
    "shadow_na",
    "bankrupt",
    "trades",
    "consumption_error",
    "max_abs_deviation",
    "mean_sq_deviation",
]


@dataclass
class PathOutcomes:
    """Per-path results of a frictional run, in global path order."""

    path_ids: NDArray[np.int64]
    x_eps: NDArray[np.float64]
    x_mid: NDArray[np.float64]
    cost: NDArray[np.float64]
    purchases: NDArray[np.float64]
    sales: NDArray[np.float64]
    share_turnover: NDArray[np.float64]
    wealth_turnover: NDArray[np.float64]
    gains_dev: NDArray[np.float64]
    cons_util_eps: NDArray[np.float64]
    accounting_error: NDArray[np.float64]
    confinement_violations: NDArray[np.float64]
    containment_violations: NDArray[np.float64]
    touch_error: NDArray[np.float64]
    shadow_na: NDArray[np.float64]
    bankrupt: NDArray[np.float64]
    trades: NDArray[np.float64]
    consumption_error: NDArray[np.float64]
    max_abs_deviation: NDArray[np.float64]
    mean_sq_deviation: NDArray[np.float64]
    x_frictionless: NDArray[np.float64]
    cons_util_frictionless: NDArray[np.float64]
    q_terminal: NDArray[np.float64]
    trace: NDArray[np.float64] | None = field(default=None, repr=False)

    @staticmethod
    def concat(items: Sequence[PathOutcomes]) -> PathOutcomes:
        kw = {}
        for f in fields(PathOutcomes):
            if f.name == "trace":
                tr = [i.trace for i in items if i.trace is not None and len(i.trace)]
                kw["trace"] = np.concatenate(tr) if tr else None
            else:
                kw[f.name] = np.concatenate([getattr(i, f.name) for i in items])
        return PathOutcomes(**kw)

    @property
    def ok(self) -> NDArray[np.bool_]:
        return self.bankrupt == 0


@dataclass
class ShadowDiagnostics:
    """Shadow-price checks aggregated over a run.

    The per-step series ``alpha``, ``gamma_coef`` and ``shadow_price`` are
    only populated by :func:`shadow_diagnostics` on traced state.
    """

    containment_violations: int
    boundary_touch_error: float
    not_applicable: int
    alpha: NDArray[np.float64] | None = field(default=None, repr=False)
    gamma_coef: NDArray[np.float64] | None = field(default=None, repr=False)
    shadow_price: NDArray[np.float64] | None = field(default=None, repr=False)


@dataclass
class FrictionSimResult:
    """Aggregated outcome of a frictional run at one spread level."""

    eta: float
    n_paths: int
    bankruptcies: int
    realized_utility: float
    realized_utility_stderr: float
    utility_gap: float
    utility_gap_stderr: float
    realized_ce_loss: float
    realized_ce_loss_stderr: float
    realized_ce_loss_fraction: float
    loss_direct_cost: float
    loss_displacement: float
    loss_displacement_stderr: float
    split_ratio: float
    split_ratio_stderr: float
    realized_turnover: float
    realized_turnover_stderr: float
    realized_share_turnover: float
    realized_share_turnover_stderr: float
    realized_wealth_turnover: float
    realized_wealth_turnover_stderr: float
    cum_purchases: float
    cum_sales: float
    purchase_sale_ratio: float
    purchase_sale_ratio_stderr: float
    mean_cost: float
    shadow: ShadowDiagnostics
    confinement_violations: int
    accounting_error_max: float
    consumption_error_max: float
    control_variate_coef: float
    halfwidth_ratio: float = float("nan")
    halfwidth_ratio_stderr: float = float("nan")
    realized_growth_reduction: float = float("nan")
    realized_growth_reduction_stderr: float = float("nan")
    predicted_welfare: WelfareReport | None = field(default=None, repr=False)
    predicted_turnover: TurnoverForecast | None = field(default=None, repr=False)
    predicted_growth: GrowthReport | None = field(default=None, repr=False)
    outcomes: PathOutcomes | None = field(default=None, repr=False)

    @property
    def realized_ce_loss_split_check(self) -> float:
        return self.loss_direct_cost + self.loss_displacement - self.realized_ce_loss


def build_band(sol: FrictionlessSolution, paths: PathBundle, options: SimOptions = SimOptions()) -> NoTradeBand:
    """Band followed by the simulator for the given spread paths."""
    kind = options.band
    if kind == "auto":
        kind = "fraction" if sol.pref.is_crra else "shares"
    if kind == "fraction":
        return crra_band_fraction(sol, sol.model, paths.eta)
    return no_trade_band(sol, sol.model, paths.spread_halfwidth)


def _cons_setup(pref: Preferences, times: NDArray[np.float64], horizon: float):
    dt = times[1] - times[0]
    w = pref.weight(times[:-1], horizon) * dt if pref.consumes else np.zeros(len(times) - 1)
    code = {
        Family.POWER: K.U_POWER,
        Family.LOG: K.U_LOG,
        Family.EXPONENTIAL: K.U_EXP,
    }.get(pref.family, K.U_NONE)
    if not pref.consumes:
        code = K.U_NONE
    return np.ascontiguousarray(w), code


def _frictionless_cons_utility(sol: FrictionlessSolution, w: NDArray[np.float64]) -> NDArray[np.float64]:
    if not np.any(w):
        return np.zeros(sol.wealth.shape[0])
    k = sol.consumption_rate[:, :-1]
    pref = sol.pref
    if pref.family is Family.LOG:
        g = np.log(k)
    elif pref.family is Family.POWER:
        g = k ** (1 - pref.gamma) / (1 - pref.gamma)
    else:
        g = -np.exp(-pref.p1 * k)
    return g @ w


def _run_block(
    sol: FrictionlessSolution,
    band: NoTradeBand,
    paths: PathBundle,
    pref: Preferences,
    x0: float,
    options: SimOptions,
    gamma_ratio: NDArray[np.float64] | None = None,
) -> PathOutcomes:
    if band.halfwidth.shape != sol.wealth.shape:
        raise ValueError("band does not match the solution grid")
    fraction = band.parametrization is Parametrization.FRACTION
    if fraction and not pref.is_crra:
        raise ValueError("a fraction band requires power or log utility")
    T = paths.grid.horizon
    w, code = _cons_setup(pref, paths.times, T)
    G = portfolio_gamma(sol, paths) if gamma_ratio is None else gamma_ratio
    n_trace = min(options.trace_paths, paths.n_paths)
    trace = np.zeros((n_trace, 6, paths.n_steps + 1))
    c = np.ascontiguousarray
    out = K.run_paths(
        c(paths.mid_price),
        c(paths.spread_halfwidth),
        c(sol.shares),
        c(sol.wealth),
        c(sol.sens_investment),
        c(band.midpoint if fraction else sol.risky_weight),
        c(band.halfwidth),
        c(sol.consumption_rate),
        c(sol.sens_consumption),
        c(sol.indirect_risk_tolerance),
        c(G),
        w,
        float(paths.dt),
        float(x0),
        fraction,
        pref.is_crra,
        c(paths.start_uniform),
        options.initial_position is StartPosition.STATIONARY,
        options.charge_initial_trade,
        options.liquidate_at_T,
        float(options.overshoot),
        code,
        float(pref.gamma),
        float(pref.p1),
        trace,
    )
    kw = {name: out[:, j].copy() for j, name in enumerate(_OUT_NAMES)}
    return PathOutcomes(
        path_ids=paths.path_ids.copy(),
        x_frictionless=sol.wealth[:, -1].copy(),
        cons_util_frictionless=_frictionless_cons_utility(sol, w),
        q_terminal=sol.q_density[:, -1].copy(),
        trace=trace if n_trace else None,
        **kw,
    )


def _ratio_of_means(a: NDArray[np.float64], b: NDArray[np.float64]) -> tuple[float, float]:
    """``mean(a) / mean(b)`` and its delta-method standard error."""
    mb = float(np.mean(b))
    if mb == 0:
        return float("nan"), float("nan")
    r = float(np.mean(a)) / mb
    if len(a) < 2:
        return r, float("nan")
    resid = a - r * b
    return r, float(np.std(resid, ddof=1) / np.sqrt(len(a)) / abs(mb))


def _mean_se(x: NDArray[np.float64]) -> tuple[float, float]:
    if len(x) == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else float("nan")
    return float(np.mean(x)), se


def _cv_adjust(d: NDArray[np.float64], cv: NDArray[np.float64] | None) -> tuple[NDArray[np.float64], float]:
    if cv is None or len(d) < 3:
        return d, 0.0
    var = float(np.var(cv))
    if var <= 0:
        return d, 0.0
    b = float(np.mean((cv - cv.mean()) * (d - d.mean())) / var)
    return d - b * cv, b


def summarize(
    outcomes: PathOutcomes,
    sol_model: MarketModel,
    pref: Preferences,
    x0: float,
    horizon: float,
    eta: float,
    options: SimOptions = SimOptions(),
    predicted_welfare: WelfareReport | None = None,
    predicted_turnover: TurnoverForecast | None = None,
    predicted_growth: GrowthReport | None = None,
) -> FrictionSimResult:
    """Aggregate per-path outcomes into estimates with standard errors."""
    o = outcomes
    ok = o.ok
    n_bad = int(np.sum(~ok))
    n = int(np.sum(ok))
    if n == 0:
        raise NumericalFailure("every path went bankrupt")
    if n_bad / len(ok) > options.max_bankruptcy_rate:
        raise NumericalFailure(f"bankruptcy rate {n_bad / len(ok):.3g} above {options.max_bankruptcy_rate:.3g}")
    sel = {f.name: getattr(o, f.name)[ok] for f in fields(PathOutcomes) if f.name != "trace"}
    T = horizon

    def u2(x):
        if pref.family is Family.QUADRATIC:
            # frictional wealth may cross the bliss point on rare paths
            return -(x**2)
        return np.asarray(utility(pref, "terminal", T, x, T), dtype=float)

    base = sel["cons_util_frictionless"] + u2(sel["x_frictionless"])
    d_eps = sel["cons_util_eps"] + u2(sel["x_eps"]) - base
    d_mid = sel["cons_util_eps"] + u2(sel["x_mid"]) - base
    cv = sel["q_terminal"] * sel["gains_dev"] if options.control_variate else None
    adj_eps, b_eps = _cv_adjust(d_eps, cv)
    adj_mid, _ = _cv_adjust(d_mid, cv)

    iu = indirect_utility(sol_model, pref, T)
    gap, gap_se = _mean_se(adj_eps)
    gap_mid, _ = _mean_se(adj_mid)
    loss = iu.ce_loss(x0, gap)
    loss_mid = iu.ce_loss(x0, gap_mid)
    loss_se = gap_se / abs(iu.derivative(x0 - loss))
    disp_se = _mean_se(adj_mid)[1] / abs(iu.derivative(x0 - loss_mid))
    split, split_se = _ratio_of_means(adj_eps - adj_mid, adj_mid)
    if loss_mid == 0 and loss == 0:
        split, split_se = float("nan"), float("nan")

    raw_util, raw_util_se = _mean_se(sel["cons_util_eps"] + u2(sel["x_eps"]))
    to, to_se = _mean_se(sel["purchases"] + sel["sales"])
    sh, sh_se = _mean_se(sel["share_turnover"])
    we, we_se = _mean_se(sel["wealth_turnover"])
    ps, ps_se = _ratio_of_means(sel["purchases"], sel["sales"])
    # uniform occupancy of the band gives E[(dev/h)^2] = 1/3
    occ = sel["mean_sq_deviation"]
    m2, m2_se = _mean_se(occ[np.isfinite(occ)])
    hw = float(np.sqrt(3 * m2)) if m2 > 0 else float("nan")
    hw_se = 1.5 * m2_se / hw if m2 > 0 else float("nan")
    g_red = g_red_se = float("nan")
    if pref.family is Family.LOG:
        g_red, g_red_se = _mean_se((np.log(sel["x_frictionless"]) - np.log(sel["x_eps"])) / T)
    shadow = ShadowDiagnostics(
        containment_violations=int(np.sum(sel["containment_violations"])),
        boundary_touch_error=float(np.max(sel["touch_error"])),
        not_applicable=int(np.sum(sel["shadow_na"])),
    )
    return FrictionSimResult(
        eta=float(eta),
        n_paths=n,
        bankruptcies=n_bad,
        realized_utility=raw_util,
        realized_utility_stderr=raw_util_se,
        utility_gap=gap,
        utility_gap_stderr=gap_se,
        realized_ce_loss=loss,
        realized_ce_loss_stderr=loss_se,
        realized_ce_loss_fraction=loss / abs(x0),
        loss_direct_cost=loss - loss_mid,
        loss_displacement=loss_mid,
        loss_displacement_stderr=disp_se,
        split_ratio=split,
        split_ratio_stderr=split_se,
        realized_turnover=to,
        realized_turnover_stderr=to_se,
        realized_share_turnover=sh,
        realized_share_turnover_stderr=sh_se,
        realized_wealth_turnover=we,
        realized_wealth_turnover_stderr=we_se,
        cum_purchases=float(np.mean(sel["purchases"])),
        cum_sales=float(np.mean(sel["sales"])),
        purchase_sale_ratio=ps,
        purchase_sale_ratio_stderr=ps_se,
        mean_cost=float(np.mean(sel["cost"])),
        shadow=shadow,
        confinement_violations=int(np.sum(sel["confinement_violations"])),
        accounting_error_max=float(np.max(sel["accounting_error"])),
        consumption_error_max=float(np.max(sel["consumption_error"])),
        control_variate_coef=b_eps,
        halfwidth_ratio=hw,
        halfwidth_ratio_stderr=hw_se,
        realized_growth_reduction=g_red,
        realized_growth_reduction_stderr=g_red_se,
        predicted_welfare=predicted_welfare,
        predicted_turnover=predicted_turnover,
        predicted_growth=predicted_growth,
        outcomes=outcomes,
    )


def block_forecasts(sol: FrictionlessSolution, band: NoTradeBand, paths: PathBundle):
    """Welfare, turnover and (log utility only) growth forecasts on one block."""
    welfare = ce_loss(sol, band, paths)
    turnover = turnover_forecast(sol, band, paths)
    growth = None
    if sol.pref.family is Family.LOG and band.parametrization is Parametrization.FRACTION:
        growth = growth_rate_reduction(sol, band, paths)
    return welfare, turnover, growth


def run_frictional(
    sol: FrictionlessSolution,
    band: NoTradeBand,
    paths: PathBundle,
    pref: Preferences,
    x0: float,
    options: SimOptions = SimOptions(),
) -> FrictionSimResult:
    """Run the band policy on one in-memory path bundle.

    Parameters
    ----------
    sol : FrictionlessSolution
        Frictionless optimum on ``paths``.
    band : NoTradeBand
        Band to follow, share or fraction parametrization.
    paths : PathBundle
    pref : Preferences
    x0 : float
        Initial capital, held in cash before the first trade.
    options : SimOptions

    Returns
    -------
    FrictionSimResult
    """
    out = _run_block(sol, band, paths, pref, x0, options)
    w, t, g = block_forecasts(sol, band, paths)
    return summarize(out, sol.model, pref, x0, paths.grid.horizon, paths.spread.eta0, options, w, t, g)


def loss_decomposition(sol, band, paths, pref, x0, options: SimOptions = SimOptions()) -> tuple[float, float]:
    """Direct-cost and displacement parts of the realized loss."""
    res = run_frictional(sol, band, paths, pref, x0, options)
    return res.loss_direct_cost, res.loss_displacement


def default_block_paths(n_steps: int, budget: float = 6e6) -> int:
    """Paths per block keeping per-block arrays near ``budget`` elements each."""
    b = max(1, int(budget // (n_steps + 1)))
    return int(min(1024, 2 ** int(np.floor(np.log2(b)))))


def simulate_policy(
    model: MarketModel,
    pref: Preferences,
    spread: SpreadModel,
    grid: PathGrid,
    x0: float,
    etas: Sequence[float] | None = None,
    options: SimOptions = SimOptions(),
    block_paths: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> list[FrictionSimResult]:
    """Run the band policy over all ``grid.n_paths`` paths in blocks.

    Each block of paths is generated once and reused for every spread level
    in ``etas`` (common random numbers). Per-path outcomes are concatenated
    in global path order before aggregation, so results do not depend on
    the block size.

    Returns
    -------
    list of FrictionSimResult
        One per spread level, in the order of ``etas``.
    """
    etas = [spread.eta0] if etas is None else [float(e) for e in etas]
    bp = block_paths or default_block_paths(grid.n_steps)
    per_eta: list[list] = [[] for _ in etas]
    starts = list(range(0, grid.n_paths, bp))
    ref = next((e for e in etas if e > 0), None)
    for bi, start in enumerate(starts):
        ids = np.arange(start, min(start + bp, grid.n_paths))
        paths = simulate_paths(model, spread, grid, ids)
        sol = solve_frictionless(model, pref, paths, x0)
        G = portfolio_gamma(sol, paths)
        opts = options if bi == 0 else _no_trace(options)
        if ref is not None:
            pr = paths.with_spread(spread.with_eta(ref))
            sol.paths = pr
            band_ref = build_band(sol, pr, options)
            preds_ref = block_forecasts(sol, band_ref, pr)
        for j, eta in enumerate(etas):
            pe = paths.with_spread(spread.with_eta(eta))
            sol.paths = pe
            if eta > 0:
                # halfwidths scale as eta**(1/3) since every spread mode is linear in eta
                f = eta / ref
                band = NoTradeBand(band_ref.midpoint, band_ref.halfwidth * np.cbrt(f), band_ref.parametrization)
                preds = _scale_predictions(preds_ref, f)
            else:
                band = build_band(sol, pe, options)
                preds = block_forecasts(sol, band, pe)
            out = _run_block(sol, band, pe, pref, x0, opts, G)
            per_eta[j].append((out, *preds))
        if progress is not None:
            progress(bi + 1, len(starts))
    results = []
    for eta, items in zip(etas, per_eta):
        outs = PathOutcomes.concat([i[0] for i in items])
        welfare = merge_reports([i[1] for i in items])
        turnover = merge_reports([i[2] for i in items])
        growth = merge_reports([i[3] for i in items]) if items[0][3] is not None else None
        results.append(summarize(outs, model, pref, x0, grid.horizon, eta, options, welfare, turnover, growth))
    return results


def _scale_predictions(preds, f: float):
    welfare, turnover, growth = preds
    if f == 1.0:
        return preds
    up, down = np.cbrt(f) ** 2, 1 / np.cbrt(f)

    def sc(sample, k):
        return None if sample is None else sample.scaled(k)

    w = WelfareReport.from_samples(sc(welfare.sample_q, up), sc(welfare.sample_hat, up), welfare.horizon, welfare.has_esr)
    t = TurnoverForecast.from_samples(sc(turnover.sample_abs, down), sc(turnover.sample_sh, down), sc(turnover.sample_we, down))
    g = None if growth is None else GrowthReport.from_sample(growth.sample.scaled(up))
    return w, t, g


def _no_trace(options: SimOptions) -> SimOptions:
    if options.trace_paths == 0:
        return options
    from dataclasses import replace

    return replace(options, trace_paths=0)


def shadow_diagnostics(
    phi_eps: NDArray[np.float64],
    midpoint: NDArray[np.float64],
    halfwidth: NDArray[np.float64],
    side: NDArray[np.float64],
    R: NDArray[np.float64],
    gamma_ratio: NDArray[np.float64],
    eps: NDArray[np.float64],
) -> ShadowDiagnostics:
    """Shadow price ``S_eps - S = alpha d**3 - gamma d`` along recorded states.

    Parameters
    ----------
    phi_eps, midpoint, halfwidth : ndarray
        Post-trade holdings and share-space band at each step.
    side : ndarray
        ``+1`` where a purchase occurred, ``-1`` for a sale, 0 otherwise.
    R, gamma_ratio : ndarray
        Risk tolerance and portfolio gamma ``d<phi>/d<S>`` at each step.
    eps : ndarray
        Half-spread at each step.

    Returns
    -------
    ShadowDiagnostics
        ``shadow_price`` holds the offset ``S_eps - S``. Steps with zero
        portfolio gamma are not applicable and left as NaN.
    """
    ok = (gamma_ratio > 0) & (eps > 0) & (R > 0)
    alpha = np.full(phi_eps.shape, np.nan)
    gam = np.full(phi_eps.shape, np.nan)
    alpha[ok] = 1 / (3 * R[ok] * gamma_ratio[ok])
    gam[ok] = np.cbrt(9 / (4 * R[ok]) * eps[ok] ** 2 / gamma_ratio[ok])
    d = phi_eps - midpoint
    off = alpha * d**3 - gam * d
    viol = int(np.sum(np.abs(off[ok]) > eps[ok] * (1 + 1e-9)))
    traded = ok & (side != 0)
    touch = float(np.max(np.abs(off[traded] - side[traded] * eps[traded]))) if np.any(traded) else 0.0
    na = int(np.sum(~ok & (side != 0)))
    return ShadowDiagnostics(viol, touch, na, alpha, gam, off)


@dataclass
class TurnoverComparison:
    """Realized against forecast turnover on common paths."""

    quantity: list[str]
    realized: list[float]
    forecast: list[float]
    ratio: list[float]
    ratio_stderr: list[float]
    purchase_sale_ratio: float
    purchase_sale_ratio_stderr: float


def realized_turnover_stats(result: FrictionSimResult, forecast: TurnoverForecast | None = None) -> TurnoverComparison:
    """Ratios of realized to forecast turnover with paired standard errors."""
    forecast = forecast or result.predicted_turnover
    if forecast is None or result.outcomes is None:
        raise ValueError("result carries no per-path outcomes or forecast")
    o = result.outcomes
    ok = o.ok
    rows = [
        ("absolute_share_turnover", o.purchases + o.sales, forecast.sample_abs),
        ("relative_share_turnover", o.share_turnover, forecast.sample_sh),
        ("relative_wealth_turnover", o.wealth_turnover, forecast.sample_we),
    ]
    names, real, fc, ratio, se = [], [], [], [], []
    for name, r, f in rows:
        if f is None:
            continue
        rr, ss = _ratio_of_means(r[ok], f.values[ok])
        names.append(name)
        real.append(float(np.mean(r[ok])))
        fc.append(float(np.mean(f.values[ok])))
        ratio.append(rr)
        se.append(ss)
    return TurnoverComparison(
        names, real, fc, ratio, se, result.purchase_sale_ratio, result.purchase_sale_ratio_stderr
    )


@dataclass
class GrowthMeasurement:
    """Realized long-run growth rates per year."""

    frictionless_rate: float
    frictionless_rate_stderr: float
    frictional_rate: float
    frictional_rate_stderr: float
    reduction: float
    reduction_stderr: float
    predicted_reduction: float
    theoretical_frictionless_rate: float
    n_paths: int
    containment_violations: int = 0
    boundary_touch_error: float = float("nan")


def growth_rate_measurement(
    model: MarketModel,
    pref: Preferences,
    spread: SpreadModel,
    long_grid: PathGrid,
    options: SimOptions = SimOptions(liquidate_at_T=False, charge_initial_trade=False),
    block_paths: int | None = None,
) -> GrowthMeasurement:
    """Realized ``log(X_T) / T`` with and without the spread on common paths."""
    if pref.family is not Family.LOG or pref.consumes:
        raise ValueError("growth measurement needs log utility without consumption")
    res = simulate_policy(model, pref, spread, long_grid, 1.0, None, options, block_paths)[0]
    o = res.outcomes
    ok = o.ok
    T = long_grid.horizon
    g0 = np.log(o.x_frictionless[ok]) / T
    g1 = np.log(o.x_eps[ok]) / T
    f0, f0_se = _mean_se(g0)
    f1, f1_se = _mean_se(g1)
    red, red_se = _mean_se(g0 - g1)
    if model.is_black_scholes:
        theory = 0.5 * (model.mu / model.sigma) ** 2
    else:
        theory = float("nan")
    pred = res.predicted_growth.rate_reduction if res.predicted_growth is not None else float("nan")
    return GrowthMeasurement(
        f0,
        f0_se,
        f1,
        f1_se,
        red,
        red_se,
        pred,
        theory,
        int(np.sum(ok)),
        res.shadow.containment_violations,
        res.shadow.boundary_touch_error,
    )
