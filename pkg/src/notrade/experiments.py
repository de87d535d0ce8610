"""Spread sweeps, power-law regressions and realized-vs-predicted reports.

A sweep runs the band policy at every relative spread on a grid, on common
random numbers by default, and compares each simulated quantity with its
small-spread forecast. Log-log slopes are fitted per quantity.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .asymptotics import (
    GrowthReport,
    TurnoverForecast,
    WelfareReport,
    band_in_fraction,
    mean_variance_report,
    merge_reports,
    quadratic_value,
)
from .frictionless import crra_bracket, solve_frictionless
from .market import MarketModel, PathGrid, SpreadModel, simulate_paths
from .preferences import Preferences
from .simulator import FrictionSimResult, SimOptions, block_forecasts, build_band, default_block_paths, simulate_policy

__all__ = [
    "BaseConfig",
    "SweepSpec",
    "SweepRow",
    "Regression",
    "SweepResult",
    "ComparisonRow",
    "ComparisonReport",
    "DEFAULT_TOLERANCES",
    "run_sweep",
    "compare_report",
    "fit_power_law",
    "write_sweep",
    "SharpeEstimate",
    "sample_sharpe",
    "MeanVarianceCheck",
    "mean_variance_check",
    "BracketCheck",
    "bracket_check",
    "BandSummary",
    "Forecast",
    "forecast",
]

# expected exponents of each forecast in the relative spread
EXPONENTS = {
    "band_halfwidth": 1 / 3,
    "ce_loss": 2 / 3,
    "turnover": -1 / 3,
    "growth_loss": 2 / 3,
}

DEFAULT_TOLERANCES = {
    "band_halfwidth": 0.05,
    "ce_loss": 0.25,
    "turnover": 0.10,
    "growth_loss": 0.25,
    "split_ratio": 0.10,
    "slope": 0.03,
    "max_relative_se": 0.20,
}

_NAN = float("nan")


@dataclass(frozen=True)
class BaseConfig:
    """Everything a sweep row needs except the spread level."""

    model: MarketModel = field(default_factory=MarketModel)
    pref: Preferences = field(default_factory=lambda: Preferences.power(5.0))
    spread: SpreadModel = field(default_factory=SpreadModel)
    grid: PathGrid = field(default_factory=PathGrid)
    x0: float = 1.0
    options: SimOptions = field(default_factory=SimOptions)


@dataclass(frozen=True)
class SweepSpec:
    """Spread grid plus the shared configuration.

    ``eps_grid`` must be non-empty, strictly positive and strictly
    monotone; rows are reported in the given order.
    """

    eps_grid: tuple[float, ...]
    base_config: BaseConfig = field(default_factory=BaseConfig)
    common_random_numbers: bool = True

    def __post_init__(self) -> None:
        g = tuple(float(e) for e in self.eps_grid)
        object.__setattr__(self, "eps_grid", g)
        if not g:
            raise ValueError("eps_grid is empty")
        if any(not e > 0 or not math.isfinite(e) for e in g):
            raise ValueError("eps_grid entries must be positive and finite")
        d = np.diff(g)
        if len(g) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("eps_grid must be strictly sorted")


@dataclass
class SweepRow:
    """Predicted and realized quantities at one relative spread."""

    eps: float
    band_halfwidth_pred: float = _NAN
    band_halfwidth_real: float = _NAN
    band_halfwidth_real_se: float = _NAN
    ce_loss_pred: float = _NAN
    ce_loss_pred_se: float = _NAN
    ce_loss_real: float = _NAN
    ce_loss_real_se: float = _NAN
    turnover_pred: float = _NAN
    turnover_pred_se: float = _NAN
    turnover_real: float = _NAN
    turnover_real_se: float = _NAN
    growth_loss_pred: float = _NAN
    growth_loss_real: float = _NAN
    growth_loss_real_se: float = _NAN
    split_ratio_pred: float = 2.0
    split_ratio_real: float = _NAN
    split_ratio_real_se: float = _NAN
    purchase_sale_ratio: float = _NAN
    purchase_sale_ratio_se: float = _NAN
    containment_violations: int = 0
    boundary_touch_error: float = _NAN
    n_paths: int = 0
    error: str | None = None
    result: FrictionSimResult | None = field(default=None, repr=False)


@dataclass
class Regression:
    """Least-squares fit of ``log(y) = a + slope * log(eps)``."""

    quantity: str
    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    expected: float
    n_used: int
    excluded: list[float] = field(default_factory=list)


@dataclass
class SweepResult:
    rows: list[SweepRow]
    regressions: dict[str, Regression]
    spec: SweepSpec | None = field(default=None, repr=False)


def fit_power_law(
    x: Sequence[float], y: Sequence[float], quantity: str = "", expected: float = _NAN, level: float = 0.95
) -> Regression:
    """Slope of ``log y`` against ``log x`` with a t-based confidence interval."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    n = len(lx)
    if n < 2:
        return Regression(quantity, _NAN, _NAN, _NAN, _NAN, expected, n)
    fit = stats.linregress(lx, ly)
    se = float(fit.stderr) if n > 2 else _NAN
    half = float(stats.t.ppf(0.5 + level / 2, n - 2)) * se if n > 2 else _NAN
    return Regression(quantity, float(fit.slope), se, fit.slope - half, fit.slope + half, expected, n)


def _row(eta: float, r: FrictionSimResult, halfwidth: float, x0: float) -> SweepRow:
    w, t, g = r.predicted_welfare, r.predicted_turnover, r.predicted_growth
    return SweepRow(
        eps=eta,
        band_halfwidth_pred=halfwidth,
        band_halfwidth_real=halfwidth * r.halfwidth_ratio,
        band_halfwidth_real_se=halfwidth * r.halfwidth_ratio_stderr,
        ce_loss_pred=w.ce_loss_fraction if w else _NAN,
        ce_loss_pred_se=w.ce_loss_stderr if w else _NAN,
        ce_loss_real=r.realized_ce_loss_fraction,
        ce_loss_real_se=r.realized_ce_loss_stderr / abs(x0),
        turnover_pred=t.absolute_share_turnover if t else _NAN,
        turnover_pred_se=t.absolute_share_turnover_stderr if t else _NAN,
        turnover_real=r.realized_turnover,
        turnover_real_se=r.realized_turnover_stderr,
        growth_loss_pred=g.rate_reduction if g else _NAN,
        growth_loss_real=r.realized_growth_reduction,
        growth_loss_real_se=r.realized_growth_reduction_stderr,
        split_ratio_real=r.split_ratio,
        split_ratio_real_se=r.split_ratio_stderr,
        purchase_sale_ratio=r.purchase_sale_ratio,
        purchase_sale_ratio_se=r.purchase_sale_ratio_stderr,
        containment_violations=r.shadow.containment_violations,
        boundary_touch_error=r.shadow.boundary_touch_error,
        n_paths=r.n_paths,
        result=r,
    )


def _row_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _halfwidths(base: BaseConfig, etas: Sequence[float]) -> list[float]:
    """Mean predicted halfwidth per spread on a small reference block."""
    g = base.grid
    ref = PathGrid(g.horizon, g.n_steps, min(g.n_paths, 64), g.seed)
    paths = simulate_paths(base.model, base.spread.with_eta(etas[0]), ref)
    sol = solve_frictionless(base.model, base.pref, paths, base.x0)
    h0 = float(np.mean(build_band(sol, paths, base.options).halfwidth))
    return [h0 * float(np.cbrt(e / etas[0])) for e in etas]


def run_sweep(
    spec: SweepSpec,
    block_paths: int | None = None,
    progress: Callable[[int, int], None] | None = None,
    max_relative_se: float = DEFAULT_TOLERANCES["max_relative_se"],
) -> SweepResult:
    """Simulate every spread in ``spec.eps_grid`` and fit the power laws.

    With common random numbers all rows share the same paths and run in one
    pass. A failing row records its error message and the remaining rows
    still complete.
    """
    base = spec.base_config
    etas = list(spec.eps_grid)
    half = _halfwidths(base, etas)
    rows: list[SweepRow | None] = [None] * len(etas)

    def run(eta_list, grid):
        return simulate_policy(
            base.model, base.pref, base.spread, grid, base.x0, eta_list, base.options, block_paths, progress
        )

    if spec.common_random_numbers:
        try:
            for i, r in enumerate(run(etas, base.grid)):
                rows[i] = _row(etas[i], r, half[i], base.x0)
        except Exception:
            rows = [None] * len(etas)
    for i, eta in enumerate(etas):
        if rows[i] is not None:
            continue
        grid = base.grid if spec.common_random_numbers else replace(base.grid, seed=_row_seed(base.grid.seed, i))
        try:
            rows[i] = _row(eta, run([eta], grid)[0], half[i], base.x0)
        except Exception as exc:  # recorded per row, the sweep continues
            rows[i] = SweepRow(eps=eta, band_halfwidth_pred=half[i], error=f"{type(exc).__name__}: {exc}")
    return SweepResult(rows, _regressions(rows, max_relative_se), spec)


def _regressions(rows: list[SweepRow], max_relative_se: float) -> dict[str, Regression]:
    out = {}
    for q, expo in EXPONENTS.items():
        for kind in ("pred", "real"):
            x, y, excluded = [], [], []
            for r in rows:
                v = getattr(r, f"{q}_{kind}")
                se = getattr(r, f"{q}_{kind}_se", 0.0) if kind == "real" else 0.0
                if r.error is not None or not (np.isfinite(v) and v > 0):
                    continue
                if kind == "real" and np.isfinite(se) and se > max_relative_se * v:
                    excluded.append(r.eps)
                    continue
                x.append(r.eps)
                y.append(v)
            if not x and not excluded:
                continue
            reg = fit_power_law(x, y, f"{q}_{kind}", expo)
            reg.excluded = excluded
            out[reg.quantity] = reg
    return out


_CSV_COLUMNS = [
    "eps",
    "band_halfwidth_pred",
    "band_halfwidth_real",
    "band_halfwidth_real_se",
    "ce_loss_pred",
    "ce_loss_pred_se",
    "ce_loss_real",
    "ce_loss_real_se",
    "turnover_pred",
    "turnover_pred_se",
    "turnover_real",
    "turnover_real_se",
    "growth_loss_pred",
    "growth_loss_real",
    "growth_loss_real_se",
    "split_ratio_pred",
    "split_ratio_real",
    "split_ratio_real_se",
    "purchase_sale_ratio",
    "purchase_sale_ratio_se",
    "containment_violations",
    "boundary_touch_error",
    "n_paths",
    "error",
]


# the predicted halfwidth is the band column of the table
_CSV_HEADER = {"band_halfwidth_pred": "band_halfwidth"}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        # shortest repr round-trips exactly and echoes configured values verbatim
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([_CSV_HEADER.get(c, c) for c in _CSV_COLUMNS])
    for r in result.rows:
        w.writerow([_fmt(getattr(r, c)) for c in _CSV_COLUMNS])
    return buf.getvalue()


def sweep_records(result: SweepResult) -> dict:
    rows = [{c: getattr(r, c) for c in _CSV_COLUMNS} for r in result.rows]
    regs = {k: asdict(v) for k, v in result.regressions.items()}
    return {"rows": rows, "regressions": regs}


def write_sweep(result: SweepResult, out_dir: str | Path, dumps: Callable[[object], str] | None = None) -> list[Path]:
    """Write ``sweep.csv``, ``sweep.json`` and ``regressions.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dumps = dumps or (lambda o: json.dumps(o, indent=2, sort_keys=True))
    rec = sweep_records(result)
    files = {
        "sweep.csv": sweep_csv(result),
        "sweep.json": dumps(rec["rows"]),
        "regressions.json": dumps(rec["regressions"]),
    }
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths


@dataclass
class ComparisonRow:
    quantity: str
    eps: float
    predicted: float
    realized: float
    ratio: float
    tolerance: float
    passed: bool


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    tolerances: dict[str, float]
    csv: str
    table: str

    @property
    def failures(self) -> list[ComparisonRow]:
        return [r for r in self.rows if not r.passed]


def _ratio(real: float, pred: float) -> float:
    if real == 0 and pred == 0:
        return 1.0
    if pred == 0:
        return _NAN
    return real / pred


def compare_report(sweep: SweepResult, tolerances: dict[str, float] | None = None) -> ComparisonReport:
    """Realized/predicted ratios with pass/fail flags.

    A ratio passes when ``|ratio - 1| <= tolerance`` for the quantity; the
    split ratio is compared with 2 and each realized slope with its
    expected exponent, using absolute tolerance ``slope``. Quantities
    without a forecast (NaN) are skipped.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    rows: list[ComparisonRow] = []
    for r in sweep.rows:
        if r.error is not None:
            rows.append(ComparisonRow("error", r.eps, _NAN, _NAN, _NAN, _NAN, False))
            continue
        pairs = [
            ("band_halfwidth", r.band_halfwidth_pred, r.band_halfwidth_real),
            ("ce_loss", r.ce_loss_pred, r.ce_loss_real),
            ("turnover", r.turnover_pred, r.turnover_real),
            ("growth_loss", r.growth_loss_pred, r.growth_loss_real),
            ("split_ratio", r.split_ratio_pred, r.split_ratio_real),
        ]
        for q, p, v in pairs:
            if not (np.isfinite(p) and np.isfinite(v)):
                continue
            ratio = _ratio(v, p)
            rows.append(ComparisonRow(q, r.eps, p, v, ratio, tol[q], bool(abs(ratio - 1) <= tol[q])))
    for name, reg in sweep.regressions.items():
        if not name.endswith("_real") or not np.isfinite(reg.slope):
            continue
        ok = abs(reg.slope - reg.expected) <= tol["slope"]
        rows.append(ComparisonRow(f"slope:{name}", _NAN, reg.expected, reg.slope, _ratio(reg.slope, reg.expected), tol["slope"], ok))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "eps", "predicted", "realized", "ratio", "tolerance", "passed"])
    for c in rows:
        w.writerow([c.quantity, _fmt(c.eps), _fmt(c.predicted), _fmt(c.realized), _fmt(c.ratio), _fmt(c.tolerance), c.passed])
    lines = [f"{'quantity':<28}{'eps':>10}{'predicted':>14}{'realized':>14}{'ratio':>9}{'tol':>7}  result"]
    for c in rows:
        lines.append(
            f"{c.quantity:<28}{c.eps:>10.4g}{c.predicted:>14.6g}{c.realized:>14.6g}{c.ratio:>9.4f}{c.tolerance:>7.3g}  "
            + ("pass" if c.passed else "FAIL")
        )
    return ComparisonReport(rows, tol, buf.getvalue(), "\n".join(lines))


@dataclass
class SharpeEstimate:
    sharpe: float
    stderr: float
    mean_gain: float
    sd_gain: float
    n_paths: int


def _sharpe_influence(g: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
    m, s = float(np.mean(g)), float(np.std(g))
    c = g - m
    return m / s, c / s - m * (c**2 - s**2) / (2 * s**3)


def sample_sharpe(gains: NDArray[np.float64]) -> SharpeEstimate:
    """Sharpe ratio ``mean / sd`` of terminal gains with a delta-method standard error."""
    g = np.asarray(gains, dtype=float)
    sr, infl = _sharpe_influence(g)
    se = float(np.std(infl, ddof=1) / np.sqrt(len(g)))
    return SharpeEstimate(sr, se, float(np.mean(g)), float(np.std(g, ddof=1)), len(g))


@dataclass
class MeanVarianceCheck:
    """Simulated Sharpe ratios of the scaled quadratic-utility strategy.

    ``sharpe_gap`` is the frictional minus the frictionless Sharpe ratio on
    common paths and ``sharpe_gap_pred`` its small-spread forecast.
    """

    target_mean: float
    multiplier: float
    sharpe_theory: float
    frictionless: SharpeEstimate
    frictional: SharpeEstimate
    sharpe_gap: float
    sharpe_gap_stderr: float
    sharpe_gap_pred: float
    sharpe_frictional_pred: float
    correction: float
    eta: float
    containment_violations: int = 0
    boundary_touch_error: float = _NAN


def mean_variance_check(
    model: MarketModel,
    spread: SpreadModel,
    grid: PathGrid,
    target_mean: float,
    x0: float = 1.0,
    options: SimOptions = SimOptions(liquidate_at_T=False, charge_initial_trade=False, initial_position="stationary"),
    block_paths: int | None = None,
) -> MeanVarianceCheck:
    """Run the quadratic-utility strategy scaled to reach ``target_mean``.

    The mean-variance investor holds ``multiplier`` units of the strategy
    that maximizes ``E[-X_T^2]`` from wealth ``-1``, which amounts to
    running that strategy from wealth ``-multiplier``.
    """
    u1 = quadratic_value(model, grid.horizon)
    mult = (target_mean - x0) / (1 + u1)
    res = simulate_policy(model, Preferences.quadratic(), spread, grid, -mult, None, options, block_paths)[0]
    o = res.outcomes
    ok = o.ok
    g0 = o.x_frictionless[ok] + mult
    g1 = o.x_eps[ok] + mult
    s0, s1 = sample_sharpe(g0), sample_sharpe(g1)
    _, i0 = _sharpe_influence(g0)
    _, i1 = _sharpe_influence(g1)
    gap_se = float(np.std(i1 - i0, ddof=1) / np.sqrt(len(g0)))
    sr = float(np.sqrt(-1 / u1 - 1))
    # the welfare forecast is proportional to the scale of the strategy
    K = res.predicted_welfare.ce_loss / mult
    gap_pred = -(1 + sr**2) / sr * K
    return MeanVarianceCheck(
        target_mean=float(target_mean),
        multiplier=float(mult),
        sharpe_theory=sr,
        frictionless=s0,
        frictional=s1,
        sharpe_gap=s1.sharpe - s0.sharpe,
        sharpe_gap_stderr=gap_se,
        sharpe_gap_pred=gap_pred,
        sharpe_frictional_pred=sr + gap_pred,
        correction=K,
        eta=spread.eta0,
        containment_violations=res.shadow.containment_violations,
        boundary_touch_error=res.shadow.boundary_touch_error,
    )


@dataclass
class BracketCheck:
    """Analytic against finite-difference band bracket on simulated paths."""

    rho: float
    analytic: float
    finite_difference: float
    relative_error: float
    cross_term: float
    cross_term_fd: float


def bracket_check(model: MarketModel, grid: PathGrid) -> BracketCheck:
    """Compare the closed-form bracket with pooled quadratic variations of ``pi``.

    For log utility ``pi = mu_t / sigma^2``. The finite-difference bracket is
    ``pi^2 (1 - pi)^2 - 2 pi (1 - pi) d<pi, Y>/d<Y> + d<pi>/d<Y>`` with the
    ratios of quadratic variations pooled over all steps and paths, averaged
    along the paths.
    """
    paths = simulate_paths(model, SpreadModel(), grid)
    pi = paths.drift / model.sigma**2
    dpi = np.diff(pi, axis=1)
    dy = paths.return_increments
    yy = np.sum(dy * dy)
    r_cross = np.sum(dpi * dy) / yy
    r_var = np.sum(dpi * dpi) / yy
    p = pi[:, :-1]
    core = p**2 * (1 - p) ** 2
    fd = float(np.mean(core - 2 * p * (1 - p) * r_cross + r_var))
    analytic = float(np.mean(crra_bracket(p, model)))
    cross_an = float(np.mean(crra_bracket(p, model) - core)) - model.nu_factor**2 / model.sigma**6
    cross_fd = float(np.mean(-2 * p * (1 - p) * r_cross))
    return BracketCheck(model.rho, analytic, fd, fd / analytic - 1, cross_an, cross_fd)


@dataclass
class BandSummary:
    """Path-averaged band at time zero and over the horizon.

    ``halfwidth_fraction`` restates the halfwidth as a risky fraction of
    frictionless wealth whatever the parametrization.
    """

    parametrization: str
    midpoint: float
    halfwidth: float
    lower: float
    upper: float
    halfwidth_time_average: float
    halfwidth_fraction: float
    eta: float


@dataclass
class Forecast:
    band: BandSummary
    welfare: WelfareReport
    turnover: TurnoverForecast
    growth: GrowthReport | None
    mean_variance: object | None = None


def forecast(base: BaseConfig, block_paths: int | None = None, target: tuple[str, float] | None = None) -> Forecast:
    """Small-spread forecasts on the paths of ``base.grid``, without simulating the policy.

    ``target`` additionally requests the mean-variance report, which uses
    its own quadratic-utility solution on the same paths.
    """
    g = base.grid
    bp = block_paths or default_block_paths(g.n_steps)
    welfare, turnover, growth, mv = [], [], [], []
    acc = np.zeros(5)
    for start in range(0, g.n_paths, bp):
        ids = np.arange(start, min(start + bp, g.n_paths))
        paths = simulate_paths(base.model, base.spread, g, ids)
        sol = solve_frictionless(base.model, base.pref, paths, base.x0)
        band = build_band(sol, paths, base.options)
        w, t, gr = block_forecasts(sol, band, paths)
        welfare.append(w)
        turnover.append(t)
        growth.append(gr)
        hf = band_in_fraction(band, sol).halfwidth
        acc += [
            np.sum(band.midpoint[:, 0]),
            np.sum(band.halfwidth[:, 0]),
            np.sum(np.mean(band.halfwidth, axis=1)),
            np.sum(hf[:, 0]),
            len(ids),
        ]
        if target is not None:
            mv.append(mean_variance_report(base.model, base.x0, target, base.spread, paths))
        param = band.parametrization.value
    mid, h, h_avg, h_frac = acc[:4] / acc[4]
    summary = BandSummary(param, mid, h, mid - h, mid + h, h_avg, h_frac, base.spread.eta0)
    return Forecast(
        summary,
        merge_reports(welfare),
        merge_reports(turnover),
        merge_reports(growth) if growth[0] is not None else None,
        merge_reports(mv) if mv else None,
    )
