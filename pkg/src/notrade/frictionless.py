"""Closed-form frictionless optimizers and indirect risk tolerance.

Supported pairs:

* Black-Scholes with power, log, exponential or quadratic utility.
* Mean-reverting drift with log utility.

All quantities are evaluated on the grid of a :class:`PathBundle`. The
marginal pricing density ``q_t = Z_t / Z_0`` is the stochastic exponential of
``-theta * W`` with ``theta_t = mu_t / sigma``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.typing import NDArray
from scipy import integrate, optimize

from .market import MarketModel, PathBundle
from .preferences import Family, Preferences, direct_risk_tolerance

__all__ = [
    "FrictionlessSolution",
    "IndirectUtility",
    "BSDEResidual",
    "UnsupportedPairError",
    "merton_consumption_ratio",
    "solve_frictionless",
    "indirect_utility",
    "portfolio_gamma",
    "bsde_residual",
    "dump_solution_csv",
]


class UnsupportedPairError(ValueError):
    """Raised for (model, preference) pairs without a closed form."""


@dataclass
class FrictionlessSolution:
    """Frictionless optimum along simulated paths.

    All arrays have shape ``(n_paths, n_steps + 1)``.
    """

    model: MarketModel
    pref: Preferences
    x0: float
    times: NDArray[np.float64]
    risky_weight: NDArray[np.float64]
    shares: NDArray[np.float64]
    consumption_rate: NDArray[np.float64]
    consumption_wealth_ratio: NDArray[np.float64]
    wealth: NDArray[np.float64]
    indirect_risk_tolerance: NDArray[np.float64]
    direct_risk_tolerance: NDArray[np.float64]
    sens_consumption: NDArray[np.float64]
    sens_investment: NDArray[np.float64]
    q_density: NDArray[np.float64]
    paths: PathBundle | None = field(default=None, repr=False)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def _check_pair(model: MarketModel, pref: Preferences) -> None:
    if model.is_black_scholes:
        return
    if pref.family is not Family.LOG:
        raise UnsupportedPairError(
            f"{model.kind.value} has a closed form only with log utility, got {pref.family.value}"
        )


def _theta(paths: PathBundle) -> NDArray[np.float64]:
    return paths.drift / paths.model.sigma


def _log_q(paths: PathBundle) -> NDArray[np.float64]:
    th = _theta(paths)[:, :-1]
    out = np.zeros_like(paths.mid_price)
    np.cumsum(-th * paths.dW - 0.5 * th**2 * paths.dt, axis=1, out=out[:, 1:])
    return out


def _crra_growth(model: MarketModel, pref: Preferences) -> float:
    # exponent of E[q^(1 - 1/gamma)] per unit time; zero for log
    if not model.is_black_scholes:
        return 0.0
    th = model.mu / model.sigma
    g = pref.gamma
    return th**2 * (1 - g) / (2 * g**2)


def _expm1_ratio(a: float, tau: NDArray[np.float64]) -> NDArray[np.float64]:
    """``(exp(a tau) - 1) / a`` with the limit ``tau`` at ``a = 0``."""
    if a == 0:
        return np.asarray(tau, dtype=float).copy()
    return np.expm1(a * tau) / a


def _merton_h(model: MarketModel, pref: Preferences, tau: NDArray[np.float64]) -> NDArray[np.float64]:
    """Annuity factor ``H`` linking wealth to the pricing density.

    ``X_t = x0 * q_t**(-1/gamma) * H(t) / H(0)``.
    """
    nu = _crra_growth(model, pref)
    g = pref.gamma
    h = np.exp(nu * tau)
    if pref.consumes:
        a = nu - pref.delta / g
        h = h + pref.beta ** (1 / g) * np.exp(pref.delta * tau / g) * _expm1_ratio(a, tau)
    return h


def merton_consumption_ratio(model: MarketModel, pref: Preferences, t, horizon: float):
    """Optimal consumption-to-wealth ratio ``c_t`` for CRRA utility.

    Returns ``1 / ((exp(a tau) - 1)/a + beta**(-1/gamma) exp(a tau))`` with
    ``tau = T - t`` and ``a = nu - delta/gamma``. For ``a = 0`` the first
    term becomes ``tau``, so log utility without impatience gives
    ``1 / (tau + 1/beta)``. Zero when consumption is disabled.
    """
    tau = horizon - np.asarray(t, dtype=float)
    if not pref.consumes:
        return np.zeros_like(tau) if tau.ndim else 0.0
    nu = _crra_growth(model, pref)
    a = nu - pref.delta / pref.gamma
    out = 1.0 / (_expm1_ratio(a, tau) + pref.beta ** (-1 / pref.gamma) * np.exp(a * tau))
    return out if np.ndim(out) else float(out)


def _exp_offsets(model: MarketModel, pref: Preferences, tau: NDArray[np.float64]):
    """Risk tolerance ``R`` and wealth offset ``A`` for exponential utility.

    Frictionless wealth is ``X_t = A(t) - R_t log Z_t``.
    """
    th2 = (model.mu / model.sigma) ** 2
    R = 1 / pref.p2 + (tau / pref.p1 if pref.consumes else np.zeros_like(tau))
    A = (np.log(pref.p2) - 0.5 * th2 * tau) / pref.p2
    if pref.consumes:
        A = A + (tau * np.log(pref.beta * pref.p1) + 0.5 * pref.delta * tau**2 - 0.25 * th2 * tau**2) / pref.p1
    return R, A


def solve_frictionless(model: MarketModel, pref: Preferences, paths: PathBundle, x0: float) -> FrictionlessSolution:
    """Frictionless optimal policy along the paths in ``paths``.

    Parameters
    ----------
    model : MarketModel
    pref : Preferences
    paths : PathBundle
        Paths generated from ``model``.
    x0 : float
        Initial capital. Must be positive for CRRA utility; the quadratic
        family expects wealth below the bliss point, e.g. ``-1``.

    Returns
    -------
    FrictionlessSolution

    Raises
    ------
    UnsupportedPairError
        If the pair has no closed form.
    """
    _check_pair(model, pref)
    fam = pref.family
    if pref.is_crra and not x0 > 0:
        raise ValueError(f"x0 must be positive for CRRA utility, got {x0}")
    if fam is Family.QUADRATIC and not x0 < 0:
        raise ValueError(f"quadratic utility needs x0 below the bliss point 0, got {x0}")
    S = paths.mid_price
    t = paths.times
    T = paths.grid.horizon
    tau = np.broadcast_to(T - t, S.shape)
    log_q = _log_q(paths)
    q = np.exp(log_q)
    sig2 = model.sigma**2
    zeros = np.zeros_like(S)

    if pref.is_crra:
        g = pref.gamma
        pi = paths.drift / (g * sig2)
        h = _merton_h(model, pref, T - t)
        X = x0 * np.exp(-log_q / g) * (h / h[0])
        c = np.broadcast_to(merton_consumption_ratio(model, pref, t, T), S.shape).copy()
        kappa = c * X
        R = X / g
        r = direct_risk_tolerance(pref, t, kappa) if pref.consumes else zeros.copy()
        shares = pi * X / S
        sens_phi = shares / X
        sens_k = kappa / X
    elif fam is Family.EXPONENTIAL:
        Rt, A = _exp_offsets(model, pref, T - t)
        log_z0 = (A[0] - x0) / Rt[0]
        log_z = log_z0 + log_q
        X = A - Rt * log_z
        R = np.broadcast_to(Rt, S.shape).copy()
        shares = model.mu * R / (sig2 * S)
        pi = shares * S / X
        if pref.consumes:
            kappa = (np.log(pref.beta * pref.p1) + pref.delta * tau - log_z) / pref.p1
            r = np.full_like(S, 1 / pref.p1)
        else:
            kappa = zeros.copy()
            r = zeros.copy()
        c = kappa / X
        sens_phi = zeros.copy()
        sens_k = r / R
    else:
        th2 = (model.mu / model.sigma) ** 2
        X = x0 * q * np.exp(-th2 * t)
        a = model.mu / sig2
        pi = np.full_like(S, -a)
        shares = -a * X / S
        R = -X
        kappa = zeros.copy()
        c = zeros.copy()
        r = zeros.copy()
        sens_phi = shares / X
        sens_k = zeros.copy()

    return FrictionlessSolution(
        model=model,
        pref=pref,
        x0=float(x0),
        times=t,
        risky_weight=np.asarray(pi, dtype=float),
        shares=shares,
        consumption_rate=kappa,
        consumption_wealth_ratio=c,
        wealth=X,
        indirect_risk_tolerance=R,
        direct_risk_tolerance=np.asarray(r, dtype=float),
        sens_consumption=sens_k,
        sens_investment=sens_phi,
        q_density=q,
        paths=paths,
    )


def portfolio_gamma(sol: FrictionlessSolution, paths: PathBundle) -> NDArray[np.float64]:
    """Closed-form ratio ``d<phi>/d<S>`` of the frictionless share holdings.

    Raises
    ------
    UnsupportedPairError
        If no closed form is available.
    """
    model = sol.model
    S = paths.mid_price
    X = sol.wealth
    fam = sol.pref.family
    if fam is Family.EXPONENTIAL:
        return (sol.shares / S) ** 2
    if fam is Family.QUADRATIC or (sol.pref.is_crra and model.is_black_scholes):
        pi = sol.risky_weight
        return (pi * (1 - pi)) ** 2 * X**2 / S**4
    if sol.pref.is_crra:
        return crra_bracket(sol.risky_weight, model) * X**2 / S**4
    raise UnsupportedPairError(f"no closed-form portfolio gamma for {fam.value}")


def crra_bracket(pi: NDArray[np.float64], model: MarketModel) -> NDArray[np.float64]:
    """Fraction-space activity ``pi^2 (1-pi)^2 - 2 pi (1-pi) d<pi,Y>/d<Y> + d<pi>/d<Y>``.

    For the mean-reverting model the risky weight is ``mu_t / sigma**2``,
    so ``d<pi,Y>/d<Y> = rho nu / sigma**3`` and
    ``d<pi>/d<Y> = nu**2 / sigma**6``.
    """
    base = (pi * (1 - pi)) ** 2
    if model.is_black_scholes:
        return base
    s = model.sigma
    cross = model.rho * model.nu_factor / s**3
    own = model.nu_factor**2 / s**6
    return base - 2 * pi * (1 - pi) * cross + own


@dataclass(frozen=True)
class IndirectUtility:
    """Frictionless value ``U(x)`` at time zero for a supported pair."""

    model: MarketModel
    pref: Preferences
    horizon: float

    def _log_constant(self) -> float:
        # U(x) = H0 log x + B for log utility
        model, pref, T = self.model, self.pref, self.horizon
        s2 = model.sigma**2
        if model.is_black_scholes:

            def mean_theta2_int(s):
                return model.mu**2 / s2 * s

        else:
            k, m0, mbar, nu = model.kappa_factor, model.initial_factor, model.mu, model.nu_factor

            def mean_theta2_int(s):
                # integral over [0, s] of E[mu_u^2] / sigma^2
                d = m0 - mbar
                if k > 0:
                    lin = mbar**2 * s + 2 * mbar * d * (-np.expm1(-k * s)) / k + d**2 * (-np.expm1(-2 * k * s)) / (2 * k)
                    var = nu**2 / (2 * k) * (s + np.expm1(-2 * k * s) / (2 * k))
                else:
                    lin = m0**2 * s
                    var = nu**2 * s**2 / 2
                return (lin + var) / s2

        h0 = float(_merton_h(model, pref, np.array(T)))
        b = 0.5 * mean_theta2_int(T)
        if pref.consumes:

            def integrand(s):
                w = pref.beta * np.exp(pref.delta * (T - s))
                return w * (np.log(w) + 0.5 * mean_theta2_int(s))

            b += integrate.quad(integrand, 0.0, T, epsabs=1e-14, epsrel=1e-13)[0]
        return b - h0 * np.log(h0)

    def value(self, x):
        model, pref, T = self.model, self.pref, self.horizon
        x = np.asarray(x, dtype=float)
        fam = pref.family
        if fam is Family.LOG:
            h0 = float(_merton_h(model, pref, np.array(T)))
            out = h0 * np.log(x) + self._log_constant()
        elif fam is Family.POWER:
            g = pref.gamma
            h0 = float(_merton_h(model, pref, np.array(T)))
            out = h0**g * x ** (1 - g) / (1 - g)
        elif fam is Family.EXPONENTIAL:
            R, A = _exp_offsets(model, pref, np.array(T))
            out = -R * np.exp((A - x) / R)
        else:
            th2 = (model.mu / model.sigma) ** 2
            out = -(x**2) * np.exp(-th2 * T)
        return out if out.ndim else float(out)

    def derivative(self, x) -> float:
        """``U'(x)``."""
        model, pref, T = self.model, self.pref, self.horizon
        fam = pref.family
        if pref.is_crra:
            h0 = float(_merton_h(model, pref, np.array(T)))
            return h0**pref.gamma * x ** (-pref.gamma)
        if fam is Family.EXPONENTIAL:
            R, A = _exp_offsets(model, pref, np.array(T))
            return float(np.exp((A - x) / R))
        th2 = (model.mu / model.sigma) ** 2
        return -2 * x * np.exp(-th2 * T)

    def ce_loss(self, x0: float, gap: float) -> float:
        """Loss ``L`` solving ``U(x0 - L) = U(x0) + gap``.

        Log utility is inverted analytically, every other family by
        bracketed root finding to 1e-12 relative accuracy.
        """
        if gap == 0:
            return 0.0
        if self.pref.family is Family.LOG:
            h0 = float(_merton_h(self.model, self.pref, np.array(self.horizon)))
            return float(-x0 * np.expm1(gap / h0))
        target = self.value(x0) + gap
        scale = abs(x0) if x0 != 0 else 1.0

        def f(loss):
            return self.value(x0 - loss) - target

        lo, hi = -scale * 1e-3, scale * 1e-3
        if self.pref.is_crra:
            hi = min(hi, 0.5 * x0)
        if self.pref.family is Family.QUADRATIC:
            lo = max(lo, x0 * 0.5)
        for _ in range(200):
            if f(lo) > 0 > f(hi):
                break
            lo, hi = lo * 2, hi * 2
            if self.pref.is_crra:
                hi = min(hi, x0 * (1 - 1e-12))
            if self.pref.family is Family.QUADRATIC:
                lo = max(lo, x0 * (1 - 1e-12))
        return float(optimize.brentq(f, lo, hi, xtol=1e-15 * scale, rtol=1e-12, maxiter=500))


def indirect_utility(model: MarketModel, pref: Preferences, horizon: float) -> IndirectUtility:
    _check_pair(model, pref)
    return IndirectUtility(model, pref, float(horizon))


@dataclass
class BSDEResidual:
    """Discrete check of the risk-tolerance equation.

    Attributes
    ----------
    residual : ndarray
        ``b^{R,Q} - [(c^R - (c^{RS})^2 / c^S) / R - r]`` per (path, step).
    max_abs_residual : float
    terminal_error : float
        ``max |R_T + u2'(X_T) / u2''(X_T)|``.
    """

    residual: NDArray[np.float64]
    max_abs_residual: float
    terminal_error: float


def _next_state(sol: FrictionlessSolution, paths: PathBundle, z: float):
    """Price, risk tolerance and density ratio one step ahead for shock ``z``."""
    model, pref = sol.model, sol.pref
    dt = paths.dt
    sdt = np.sqrt(dt)
    mu_k = paths.drift[:, :-1]
    th = mu_k / model.sigma
    S0 = paths.mid_price[:, :-1]
    S1 = S0 * np.exp((mu_k - 0.5 * model.sigma**2) * dt + model.sigma * sdt * z)
    ratio = np.exp(-th * sdt * z - 0.5 * th**2 * dt)
    R0 = sol.indirect_risk_tolerance[:, :-1]
    fam = pref.family
    if pref.is_crra:
        h = _merton_h(model, pref, paths.grid.horizon - paths.times)
        R1 = R0 * ratio ** (-1 / pref.gamma) * (h[1:] / h[:-1])
    elif fam is Family.EXPONENTIAL:
        R1 = np.broadcast_to(sol.indirect_risk_tolerance[:, 1:], R0.shape)
    else:
        R1 = R0 * ratio * np.exp(-(th**2) * dt)
    return S1, R1, ratio


def bsde_residual(
    sol: FrictionlessSolution,
    model: MarketModel,
    pref: Preferences,
    paths: PathBundle | None = None,
    n_nodes: int = 40,
) -> BSDEResidual:
    """Residual of the risk-tolerance BSDE on the simulation grid.

    The one-step conditional moments of ``R`` and ``S`` under the pricing
    measure are computed by Gauss-Hermite quadrature over the next price
    shock, weighting each node by the density ratio ``q_{k+1}/q_k``. Drift
    and (co)variation rates are the resulting moments divided by ``dt``.
    """
    _check_pair(model, pref)
    paths = sol.paths if paths is None else paths
    if paths is None:
        raise ValueError("paths are required when the solution does not carry them")
    if sol.model != model or sol.pref != pref:
        raise ValueError("solution was computed for a different model or preference")
    nodes, weights = hermegauss(n_nodes)
    weights = weights / np.sqrt(2 * np.pi)
    S0 = paths.mid_price[:, :-1]
    R0 = sol.indirect_risk_tolerance[:, :-1]
    m_r = np.zeros_like(S0)
    m_s = np.zeros_like(S0)
    m_rr = np.zeros_like(S0)
    m_ss = np.zeros_like(S0)
    m_rs = np.zeros_like(S0)
    for z, w in zip(nodes, weights):
        S1, R1, ratio = _next_state(sol, paths, z)
        wq = w * ratio
        dr = R1 - R0
        ds = S1 - S0
        m_r += wq * dr
        m_s += wq * ds
        m_rr += wq * dr * dr
        m_ss += wq * ds * ds
        m_rs += wq * dr * ds
    dt = paths.dt
    b = m_r / dt
    cR = (m_rr - m_r**2) / dt
    cS = (m_ss - m_s**2) / dt
    cRS = (m_rs - m_r * m_s) / dt
    r = sol.direct_risk_tolerance[:, :-1]
    res = b - ((cR - cRS**2 / cS) / R0 - r)

    XT = sol.wealth[:, -1]
    fam = pref.family
    if pref.is_crra:
        target = XT / pref.gamma
    elif fam is Family.EXPONENTIAL:
        target = np.full_like(XT, 1 / pref.p2)
    else:
        target = -XT
    term = float(np.max(np.abs(sol.indirect_risk_tolerance[:, -1] - target)))
    return BSDEResidual(residual=res, max_abs_residual=float(np.max(np.abs(res))), terminal_error=term)


def dump_solution_csv(sol: FrictionlessSolution) -> str:
    """CSV text with columns path_id, t, pi, X, R, Z."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "t", "pi", "X", "R", "Z"])
    ids = sol.paths.path_ids if sol.paths is not None else np.arange(sol.wealth.shape[0])
    for p, pid in enumerate(ids):
        for j, t in enumerate(sol.times):
            row = (t, sol.risky_weight[p, j], sol.wealth[p, j], sol.indirect_risk_tolerance[p, j], sol.q_density[p, j])
            w.writerow([int(pid)] + [repr(float(v)) for v in row])
    return buf.getvalue()
