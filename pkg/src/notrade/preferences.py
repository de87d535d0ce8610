"""Utility families with closed-form frictionless solutions.

Consumption utility is ``u1(t, x) = beta * exp(delta * (T - t)) * g(x)`` with
``g`` the family kernel; terminal utility is ``u2(x) = g(x)``. For the
exponential family the kernels are ``-exp(-p1 x)`` and ``-exp(-p2 x)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "Family",
    "Preferences",
    "direct_risk_tolerance",
    "utility",
    "marginal_utility",
    "utility_curvature",
]


class Family(str, enum.Enum):
    POWER = "Power"
    LOG = "Log"
    EXPONENTIAL = "Exponential"
    QUADRATIC = "QuadraticTruncated"


@dataclass(frozen=True)
class Preferences:
    """Investor preferences.

    Parameters
    ----------
    family : Family
    gamma : float
        Relative risk aversion for the power family. ``Power`` with
        ``gamma == 1`` is normalized to ``Log``.
    p1, p2 : float
        Absolute risk aversion for consumption and terminal wealth
        (exponential family).
    beta : float
        Weight of intermediate consumption; zero disables consumption.
    delta : float
        Impatience rate.
    """

    family: Family = Family.POWER
    gamma: float = 1.0
    p1: float = 1.0
    p2: float = 1.0
    beta: float = 0.0
    delta: float = 0.0

    def __post_init__(self) -> None:
        fam = Family(self.family)
        if fam is Family.POWER and self.gamma == 1.0:
            fam = Family.LOG
        if fam is Family.LOG:
            object.__setattr__(self, "gamma", 1.0)
        if fam is Family.QUADRATIC:
            object.__setattr__(self, "beta", 0.0)
        object.__setattr__(self, "family", fam)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if fam is Family.EXPONENTIAL and not (self.p1 > 0 and self.p2 > 0):
            raise ValueError("p1 and p2 must be positive")
        if self.beta < 0 or self.delta < 0:
            raise ValueError("beta and delta must be non-negative")

    @classmethod
    def power(cls, gamma: float, beta: float = 0.0, delta: float = 0.0) -> Preferences:
        return cls(Family.POWER, gamma=gamma, beta=beta, delta=delta)

    @classmethod
    def log(cls, beta: float = 0.0, delta: float = 0.0) -> Preferences:
        return cls(Family.LOG, beta=beta, delta=delta)

    @classmethod
    def exponential(cls, p1: float, p2: float, beta: float = 0.0, delta: float = 0.0) -> Preferences:
        return cls(Family.EXPONENTIAL, p1=p1, p2=p2, beta=beta, delta=delta)

    @classmethod
    def quadratic(cls) -> Preferences:
        return cls(Family.QUADRATIC)

    @property
    def is_crra(self) -> bool:
        return self.family in (Family.POWER, Family.LOG)

    @property
    def consumes(self) -> bool:
        return self.beta > 0

    def weight(self, t: ArrayLike, horizon: float) -> NDArray[np.float64]:
        """Consumption weight ``beta * exp(delta (T - t))``."""
        return self.beta * np.exp(self.delta * (horizon - np.asarray(t, dtype=float)))


def _check_domain(pref: Preferences, x: NDArray[np.float64], which: str) -> None:
    if pref.is_crra and np.any(x <= 0):
        raise ValueError("CRRA utility requires positive argument")
    if pref.family is Family.QUADRATIC and (which != "terminal" or np.any(x > 0)):
        raise ValueError("quadratic utility is evaluated for terminal wealth at or below the bliss point 0")


def _kernel(pref: Preferences, which: str, x: NDArray[np.float64], order: int) -> NDArray[np.float64]:
    fam = pref.family
    if fam is Family.LOG:
        return [np.log(x), 1 / x, -1 / x**2][order]
    if fam is Family.POWER:
        g = pref.gamma
        return [x ** (1 - g) / (1 - g), x**-g, -g * x ** (-g - 1)][order]
    if fam is Family.EXPONENTIAL:
        p = pref.p1 if which == "consumption" else pref.p2
        e = np.exp(-p * x)
        return [-e, p * e, -p * p * e][order]
    return [-(x**2), -2 * x, -2 * np.ones_like(x)][order]


def _evaluate(pref: Preferences, which: str, t, x, horizon, order: int):
    if which not in ("consumption", "terminal"):
        raise ValueError(f"which must be 'consumption' or 'terminal', got {which!r}")
    xa = np.asarray(x, dtype=float)
    _check_domain(pref, xa, which)
    out = _kernel(pref, which, xa, order)
    if which == "consumption":
        out = pref.weight(t, horizon) * out
    return out if np.ndim(out) else float(out)


def utility(pref: Preferences, which: str, t: ArrayLike, x: ArrayLike, horizon: float = 1.0):
    """``u1(t, x)`` or ``u2(x)``."""
    return _evaluate(pref, which, t, x, horizon, 0)


def marginal_utility(pref: Preferences, which: str, t: ArrayLike, x: ArrayLike, horizon: float = 1.0):
    """First derivative of ``u1(t, .)`` or ``u2`` at ``x``.

    Examples
    --------
    >>> marginal_utility(Preferences.log(), "terminal", 0.0, 2.0)
    0.5
    """
    return _evaluate(pref, which, t, x, horizon, 1)


def utility_curvature(pref: Preferences, which: str, t: ArrayLike, x: ArrayLike, horizon: float = 1.0):
    """Second derivative of ``u1(t, .)`` or ``u2`` at ``x``."""
    return _evaluate(pref, which, t, x, horizon, 2)


def direct_risk_tolerance(pref: Preferences, t: ArrayLike, consumption_rate: ArrayLike):
    """Risk tolerance ``-u1'/u1''`` of consumption utility at rate ``consumption_rate``.

    Zero when consumption is disabled.
    """
    k = np.asarray(consumption_rate, dtype=float)
    shape = np.broadcast_shapes(np.shape(t), k.shape)
    if not pref.consumes:
        out = np.zeros(shape)
    elif pref.is_crra:
        if np.any(k <= 0):
            raise ValueError("consumption rate must be positive for CRRA preferences")
        out = np.broadcast_to(k / pref.gamma, shape).copy()
    elif pref.family is Family.EXPONENTIAL:
        out = np.full(shape, 1 / pref.p1)
    else:
        out = np.zeros(shape)
    return out if out.ndim else float(out)
