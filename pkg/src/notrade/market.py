"""Price, factor and spread dynamics with reproducible path generation.

Two price models are supported:

* ``BlackScholes``: geometric Brownian motion, stepped exactly in law.
* ``MeanRevertingDrift``: the instantaneous drift is an Ornstein-Uhlenbeck
  factor correlated with the price shock. The factor is stepped exactly and
  the price by a log-Euler step.

Every path owns an independent Philox stream keyed by ``(seed, path_id)``.
Results therefore do not depend on how paths are split into blocks or
ordered across workers.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ModelKind",
    "SpreadMode",
    "MarketModel",
    "SpreadModel",
    "PathGrid",
    "PathBundle",
    "path_normals",
    "simulate_paths",
    "quadratic_variation_rate",
    "dump_paths_csv",
]


class ModelKind(str, enum.Enum):
    BLACK_SCHOLES = "BlackScholes"
    MEAN_REVERTING = "MeanRevertingDrift"


class SpreadMode(str, enum.Enum):
    PROPORTIONAL = "ProportionalConstant"
    ABSOLUTE = "AbsoluteConstant"
    STOCHASTIC = "ProportionalStochastic"


@dataclass(frozen=True)
class MarketModel:
    """Mid-price dynamics.

    Parameters
    ----------
    kind : ModelKind
        Model family.
    mu : float
        Constant excess drift (Black-Scholes) or long-run mean of the drift
        factor (mean-reverting model).
    sigma : float
        Volatility, strictly positive.
    kappa_factor, nu_factor : float
        Mean-reversion speed and volatility of the drift factor.
    rho : float
        Correlation between price and factor shocks.
    s0 : float
        Initial mid price.
    factor0 : float or None
        Initial factor value; defaults to ``mu``.
    """

    kind: ModelKind = ModelKind.BLACK_SCHOLES
    mu: float = 0.08
    sigma: float = 0.2
    kappa_factor: float = 0.0
    nu_factor: float = 0.0
    rho: float = 0.0
    s0: float = 1.0
    factor0: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.s0 > 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if not abs(self.rho) <= 1:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.kappa_factor < 0 or self.nu_factor < 0:
            raise ValueError("kappa_factor and nu_factor must be non-negative")

    @property
    def is_black_scholes(self) -> bool:
        return self.kind is ModelKind.BLACK_SCHOLES

    @property
    def initial_factor(self) -> float:
        return self.mu if self.factor0 is None else float(self.factor0)

    @property
    def n_shocks(self) -> int:
        return 1 if self.is_black_scholes else 2


@dataclass(frozen=True)
class SpreadModel:
    """Half-spread ``eps_t`` around the mid price.

    ``eta0`` is the relative half-spread at time zero. In proportional modes
    ``eps_t = eta0 * S_t`` (times ``exp(l_t)`` for the stochastic mode, with
    ``l`` an OU process started at zero); in absolute mode
    ``eps_t = eta0 * s0`` for all t. The small parameter of the asymptotics
    is ``eta0`` itself, exposed as ``epsilon``.
    """

    mode: SpreadMode = SpreadMode.PROPORTIONAL
    eta0: float = 0.01
    ou_speed: float = 0.0
    ou_vol: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SpreadMode(self.mode))
        if not self.eta0 >= 0:
            raise ValueError(f"eta0 must be non-negative, got {self.eta0}")
        if self.eta0 >= 1:
            raise ValueError(f"eta0={self.eta0} makes the bid price non-positive")
        if self.ou_speed < 0 or self.ou_vol < 0:
            raise ValueError("ou_speed and ou_vol must be non-negative")

    @property
    def epsilon(self) -> float:
        return self.eta0

    def with_eta(self, eta0: float) -> SpreadModel:
        return replace(self, eta0=float(eta0))


@dataclass(frozen=True)
class PathGrid:
    horizon: float = 1.0
    n_steps: int = 100
    n_paths: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) < 1 or int(self.n_paths) < 1:
            raise ValueError("n_steps and n_paths must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> NDArray[np.float64]:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass
class PathBundle:
    """Simulated paths on a uniform grid.

    Arrays indexed ``(path, time)`` have ``n_steps + 1`` columns, arrays
    indexed ``(path, step)`` have ``n_steps``.
    """

    model: MarketModel
    spread: SpreadModel
    grid: PathGrid
    path_ids: NDArray[np.int64]
    times: NDArray[np.float64]
    mid_price: NDArray[np.float64]
    return_increments: NDArray[np.float64]
    dW: NDArray[np.float64]
    factor: NDArray[np.float64] | None
    spread_halfwidth: NDArray[np.float64]
    start_uniform: NDArray[np.float64] = field(repr=False)
    log_multiplier: NDArray[np.float64] | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.mid_price.shape[0]

    @property
    def n_steps(self) -> int:
        return self.mid_price.shape[1] - 1

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def drift(self) -> NDArray[np.float64]:
        """Instantaneous drift of the return process per (path, time)."""
        if self.factor is None:
            return np.full_like(self.mid_price, self.model.mu)
        return self.factor

    @property
    def eta(self) -> NDArray[np.float64]:
        return self.spread_halfwidth / self.mid_price

    def with_spread(self, spread: SpreadModel) -> PathBundle:
        """Same paths with the spread level changed to ``spread.eta0``.

        Only the level may differ, so common random numbers carry over.
        """
        if spread.mode != self.spread.mode or (
            spread.ou_speed,
            spread.ou_vol,
        ) != (self.spread.ou_speed, self.spread.ou_vol):
            raise ValueError("only eta0 may change when rescaling a spread")
        eps = _spread_path(spread, self.model, self.mid_price, self.log_multiplier)
        return replace(self, spread=spread, spread_halfwidth=eps)


def _philox(seed: int, path_id: int, stream: int) -> np.random.Generator:
    # key = seed; path index in the top counter word, stream in the next
    counter = (int(path_id) << 192) | (int(stream) << 128)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


def path_normals(seed: int, path_id: int, n_steps: int, n_normals: int) -> NDArray[np.float64]:
    """Standard normals of shape ``(n_steps, n_normals)`` for one path."""
    return _philox(seed, path_id, 0).standard_normal((n_steps, n_normals))


def _start_uniform(seed: int, path_id: int) -> float:
    return float(_philox(seed, path_id, 1).uniform(-1.0, 1.0))


def _spread_path(
    spread: SpreadModel,
    model: MarketModel,
    S: NDArray[np.float64],
    log_mult: NDArray[np.float64] | None,
) -> NDArray[np.float64]:
    if spread.mode is SpreadMode.ABSOLUTE:
        return np.full_like(S, spread.eta0 * model.s0)
    eps = spread.eta0 * S
    if spread.mode is SpreadMode.STOCHASTIC and log_mult is not None:
        eps = eps * np.exp(log_mult)
    return eps


def _ou_step(speed: float, vol: float, dt: float) -> tuple[float, float]:
    """Decay factor and conditional standard deviation of an exact OU step."""
    decay = np.exp(-speed * dt)
    if speed > 0:
        sd = vol * np.sqrt(-np.expm1(-2 * speed * dt) / (2 * speed))
    else:
        sd = vol * np.sqrt(dt)
    return float(decay), float(sd)


def simulate_paths(
    model: MarketModel,
    spread: SpreadModel,
    grid: PathGrid,
    path_ids: NDArray[np.integer] | range | None = None,
    normals: NDArray[np.float64] | None = None,
) -> PathBundle:
    """Generate price, factor and spread paths.

    Parameters
    ----------
    model, spread, grid
        Dynamics and discretization.
    path_ids : array-like of int, optional
        Global indices of the paths to generate; defaults to all
        ``grid.n_paths``. Any subset reproduces the same paths as the full
        run.
    normals : ndarray, optional
        Override of the standard normal shocks, shape
        ``(n_paths, n_steps, k)`` with ``k`` = shocks per step. Intended for
        deterministic tests.

    Returns
    -------
    PathBundle
    """
    n = grid.n_steps
    dt = grid.dt
    ids = np.arange(grid.n_paths) if path_ids is None else np.asarray(path_ids, dtype=np.int64)
    stoch = spread.mode is SpreadMode.STOCHASTIC
    k = model.n_shocks + (1 if stoch else 0)
    if normals is None:
        Z = np.stack([path_normals(grid.seed, int(i), n, k) for i in ids]) if len(ids) else np.empty((0, n, k))
    else:
        Z = np.asarray(normals, dtype=np.float64)
        if Z.ndim == 2:
            Z = Z[:, :, None]
        if Z.shape[:2] != (len(ids), n) or Z.shape[2] < model.n_shocks:
            raise ValueError(f"normals must have shape ({len(ids)}, {n}, {k}), got {Z.shape}")
        if Z.shape[2] < k:
            Z = np.concatenate([Z, np.zeros(Z.shape[:2] + (k - Z.shape[2],))], axis=2)
    u0 = np.array([_start_uniform(grid.seed, int(i)) for i in ids])

    sig = model.sigma
    dW = np.sqrt(dt) * Z[:, :, 0]
    P = len(ids)
    logS = np.empty((P, n + 1))
    logS[:, 0] = np.log(model.s0)
    factor = None
    if model.is_black_scholes:
        np.cumsum((model.mu - 0.5 * sig**2) * dt + sig * dW, axis=1, out=logS[:, 1:])
        logS[:, 1:] += logS[:, :1]
    else:
        decay, sd = _ou_step(model.kappa_factor, model.nu_factor, dt)
        zf = model.rho * Z[:, :, 0] + np.sqrt(max(0.0, 1 - model.rho**2)) * Z[:, :, 1]
        factor = np.empty((P, n + 1))
        factor[:, 0] = model.initial_factor
        for j in range(n):
            factor[:, j + 1] = model.mu + (factor[:, j] - model.mu) * decay + sd * zf[:, j]
        np.cumsum((factor[:, :-1] - 0.5 * sig**2) * dt + sig * dW, axis=1, out=logS[:, 1:])
        logS[:, 1:] += logS[:, :1]
    S = np.exp(logS)
    dY = np.expm1(np.diff(logS, axis=1))

    log_mult = None
    if stoch:
        decay, sd = _ou_step(spread.ou_speed, spread.ou_vol, dt)
        log_mult = np.zeros((P, n + 1))
        zl = Z[:, :, model.n_shocks]
        for j in range(n):
            log_mult[:, j + 1] = log_mult[:, j] * decay + sd * zl[:, j]
    eps = _spread_path(spread, model, S, log_mult)
    if np.any(S[:, 0] - eps[:, 0] <= 0):
        raise ValueError("spread makes the initial bid price non-positive")
    if spread.eta0 > 0 and np.any(S - eps <= 0):
        raise ValueError("spread makes the bid price non-positive on some path")

    return PathBundle(
        model=model,
        spread=spread,
        grid=grid,
        path_ids=ids,
        times=grid.times,
        mid_price=S,
        return_increments=dY,
        dW=dW,
        factor=factor,
        spread_halfwidth=eps,
        start_uniform=u0,
        log_multiplier=log_mult,
    )


_SERIES = {"S", "Y", "factor", "factor,Y", "factor,S", "S,Y"}


def quadratic_variation_rate(paths: PathBundle, series: str | tuple[str, str]) -> NDArray[np.float64]:
    """Model-implied (co)variation rate per (path, time).

    Parameters
    ----------
    paths : PathBundle
    series : str or tuple
        One of ``"S"``, ``"Y"``, ``"factor"`` or a pair such as
        ``("factor", "Y")``. Pairs are symmetric.

    Returns
    -------
    ndarray
        For instance ``c^S = sigma**2 * S**2``.
    """
    if isinstance(series, tuple):
        key = ",".join(series)
        alt = ",".join(series[::-1])
    else:
        key = alt = str(series)
    key = key if key in _SERIES else alt
    if key not in _SERIES:
        raise KeyError(f"unknown series {series!r}")
    m = paths.model
    S = paths.mid_price
    sig = m.sigma
    nu = 0.0 if m.is_black_scholes else m.nu_factor
    rho = 0.0 if m.is_black_scholes else m.rho
    table = {
        "S": lambda: sig**2 * S**2,
        "Y": lambda: np.full_like(S, sig**2),
        "S,Y": lambda: sig**2 * S,
        "factor": lambda: np.full_like(S, nu**2),
        "factor,Y": lambda: np.full_like(S, rho * nu * sig),
        "factor,S": lambda: rho * nu * sig * S,
    }
    return table[key]()


def dump_paths_csv(paths: PathBundle) -> str:
    """CSV text with columns path_id, t, S, factor, eps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "t", "S", "factor", "eps"])
    f = paths.factor
    for p, pid in enumerate(paths.path_ids):
        for j, t in enumerate(paths.times):
            w.writerow(
                [
                    int(pid),
                    repr(float(t)),
                    repr(float(paths.mid_price[p, j])),
                    "" if f is None else repr(float(f[p, j])),
                    repr(float(paths.spread_halfwidth[p, j])),
                ]
            )
    return buf.getvalue()
