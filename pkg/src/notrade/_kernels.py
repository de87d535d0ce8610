"""Compiled per-path loop for the frictional policy."""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# consumption utility kernels
U_POWER = 0
U_LOG = 1
U_EXP = 2
U_NONE = 3

# output columns
(
    O_X_EPS,
    O_X_MID,
    O_COST,
    O_BUY,
    O_SELL,
    O_SHTU,
    O_WETU,
    O_GAINS_DEV,
    O_CONS_UTIL,
    O_ACCT_ERR,
    O_CONF_VIOL,
    O_CONT_VIOL,
    O_TOUCH_ERR,
    O_SHADOW_NA,
    O_BANKRUPT,
    O_TRADES,
    O_CONS_ERR,
    O_MAX_ABS_DEV,
    O_DEV2,
) = range(19)
N_OUT = 19


@njit(cache=True, error_model="numpy")
def _cons_kernel(code, x, gamma, p1):
    if code == U_POWER:
        return x ** (1.0 - gamma) / (1.0 - gamma)
    if code == U_LOG:
        return math.log(x)
    if code == U_EXP:
        return -math.exp(-p1 * x)
    return 0.0


@njit(cache=True, error_model="numpy")
def _band_now(fraction, k, p, X_e, S, phi, X, sens_phi, pi, half):
    """Midpoint and halfwidth in shares at frictional wealth ``X_e``."""
    if fraction:
        return pi[p, k] * X_e / S, half[p, k] * abs(X_e) / S
    return phi[p, k] + sens_phi[p, k] * (X_e - X[p, k]), half[p, k]


@njit(cache=True, parallel=True, error_model="numpy")
def run_paths(
    S,
    eps,
    phi,
    X,
    sens_phi,
    pi,
    half,
    kappa,
    sens_k,
    R,
    G,
    cons_w,
    dt,
    x0,
    fraction,
    crra,
    start_u,
    stationary_start,
    charge_initial,
    liquidate,
    overshoot,
    cons_code,
    gamma,
    p1,
    trace,
):
    """Simulate the band policy on every path.

    ``fraction`` selects a band in risky fractions (``pi``, ``half``) or in
    shares (``phi``, ``sens_phi``, ``half``). ``R`` and ``G`` are the
    frictionless risk tolerance and portfolio gamma feeding the shadow price;
    in fraction mode they are rescaled to frictional wealth. ``trace`` has
    shape ``(n_trace, 6, n + 1)`` and receives phi_eps, midpoint, halfwidth,
    X_eps, cumulative cost and trade side for the first ``n_trace`` paths.
    """
    P, n1 = S.shape
    n = n1 - 1
    out = np.zeros((P, N_OUT))
    n_trace = trace.shape[0]
    for p in prange(P):
        S0 = S[p, 0]
        e0 = eps[p, 0]
        u = start_u[p] if stationary_start else 0.0
        if fraction:
            f0 = pi[p, 0] + u * half[p, 0]
            if charge_initial:
                ph = f0 * x0 / (S0 + abs(f0) * e0)
            else:
                ph = f0 * x0 / S0
        else:
            tgt = phi[p, 0] + u * half[p, 0]
            if charge_initial:
                sgn = 1.0 if tgt >= 0 else -1.0
                ph = tgt / (1.0 + sens_phi[p, 0] * e0 * sgn)
            else:
                ph = tgt
        cost = e0 * abs(ph) if charge_initial else 0.0
        cash = x0 - ph * S0 - cost
        cum_cost = cost
        gains = 0.0
        cons_total = 0.0
        buy = 0.0
        sell = 0.0
        shtu = 0.0
        wetu = 0.0
        gdev = 0.0
        cutil = 0.0
        acct = 0.0
        conf = 0
        cont = 0
        touch = 0.0
        na = 0
        trades = 0
        cerr = 0.0
        maxdev = 0.0
        dev2 = 0.0
        n_dev = 0
        bankrupt = False
        for k in range(n):
            Sk = S[p, k]
            ek = eps[p, k]
            X_e = cash + ph * Sk
            if crra and X_e <= 0.0:
                bankrupt = True
                break
            side = 0
            if k > 0:
                mid, h = _band_now(fraction, k, p, X_e, Sk, phi, X, sens_phi, pi, half)
                if fraction:
                    lo = pi[p, k] - half[p, k]
                    hi = pi[p, k] + half[p, k]
                    f = ph * Sk / X_e
                    d = 0.0
                    if f < lo:
                        t = lo + overshoot * half[p, k]
                        d = (t * X_e - ph * Sk) / (Sk + t * ek)
                        side = 1
                    elif f > hi:
                        t = hi - overshoot * half[p, k]
                        d = (ph * Sk - t * X_e) / (Sk - t * ek)
                        side = -1
                else:
                    sp = sens_phi[p, k]
                    d = 0.0
                    if ph < mid - h:
                        d = (mid - h + overshoot * h - ph) / (1.0 + sp * ek)
                        side = 1
                    elif ph > mid + h:
                        d = (ph - mid - h + overshoot * h) / (1.0 - sp * ek)
                        side = -1
                if side == 1:
                    cash -= d * (Sk + ek)
                    ph += d
                    buy += d
                elif side == -1:
                    cash += d * (Sk - ek)
                    ph -= d
                    sell += d
                if side != 0:
                    cum_cost += ek * d
                    trades += 1
                    X_e = cash + ph * Sk
                    if ph != 0.0:
                        shtu += d / abs(ph)
                    wetu += Sk * d / X_e

            # post-trade diagnostics
            mid, h = _band_now(fraction, k, p, X_e, Sk, phi, X, sens_phi, pi, half)
            dev = ph - mid
            if abs(dev) > maxdev:
                maxdev = abs(dev)
            if abs(dev) > h * (1.0 + 1e-12) + 1e-15 * abs(mid):
                conf += 1
            if h > 0.0:
                dev2 += (dev / h) ** 2
                n_dev += 1
            if fraction:
                scale = X_e / X[p, k]
                Re = R[p, k] * scale
                Ge = G[p, k] * scale * scale
            else:
                Re = R[p, k]
                Ge = G[p, k]
            if Ge > 0.0 and ek > 0.0 and Re > 0.0:
                alpha = 1.0 / (3.0 * Re * Ge)
                gam = np.cbrt(9.0 / (4.0 * Re) * ek * ek / Ge)
                dS = alpha * dev * dev * dev - gam * dev
                if abs(dS) > ek * (1.0 + 1e-9):
                    cont += 1
                if side != 0:
                    err = abs(dS - side * ek)
                    if err > touch:
                        touch = err
            elif side != 0:
                na += 1

            if p < n_trace:
                trace[p, 0, k] = ph
                trace[p, 1, k] = mid
                trace[p, 2, k] = h
                trace[p, 3, k] = X_e
                trace[p, 4, k] = cum_cost
                trace[p, 5, k] = side

            kap = kappa[p, k] + sens_k[p, k] * (X_e - X[p, k])
            ce = abs(kap - kappa[p, k] - sens_k[p, k] * (X_e - X[p, k]))
            if ce > cerr:
                cerr = ce
            if cons_w[k] != 0.0:
                if crra and kap <= 0.0:
                    bankrupt = True
                    break
                cutil += cons_w[k] * _cons_kernel(cons_code, kap, gamma, p1)
            cash -= kap * dt
            cons_total += kap * dt
            dS_k = S[p, k + 1] - Sk
            gains += ph * dS_k
            gdev += (ph - phi[p, k]) * dS_k
            a = abs(cash + ph * S[p, k + 1] - (x0 + gains - cons_total - cum_cost)) / abs(x0)
            if a > acct:
                acct = a

        Sn = S[p, n]
        X_e = cash + ph * Sn
        if crra and X_e - (eps[p, n] * abs(ph) if liquidate else 0.0) <= 0.0:
            bankrupt = True
        if bankrupt:
            for j in range(N_OUT):
                out[p, j] = np.nan
            out[p, O_BANKRUPT] = 1.0
            continue
        if p < n_trace:
            trace[p, 0, n] = ph
            mid, h = _band_now(fraction, n, p, X_e, Sn, phi, X, sens_phi, pi, half)
            trace[p, 1, n] = mid
            trace[p, 2, n] = h
        if liquidate:
            c = eps[p, n] * abs(ph)
            X_e -= c
            cum_cost += c
        if p < n_trace:
            trace[p, 3, n] = X_e
            trace[p, 4, n] = cum_cost
        out[p, O_X_EPS] = X_e
        out[p, O_X_MID] = X_e + cum_cost
        out[p, O_COST] = cum_cost
        out[p, O_BUY] = buy
        out[p, O_SELL] = sell
        out[p, O_SHTU] = shtu
        out[p, O_WETU] = wetu
        out[p, O_GAINS_DEV] = gdev
        out[p, O_CONS_UTIL] = cutil
        out[p, O_ACCT_ERR] = acct
        out[p, O_CONF_VIOL] = conf
        out[p, O_CONT_VIOL] = cont
        out[p, O_TOUCH_ERR] = touch
        out[p, O_SHADOW_NA] = na
        out[p, O_BANKRUPT] = 0.0
        out[p, O_TRADES] = trades
        out[p, O_CONS_ERR] = cerr
        out[p, O_MAX_ABS_DEV] = maxdev
        out[p, O_DEV2] = dev2 / n_dev if n_dev > 0 else np.nan
    return out
