"""Closed-form information rates for reverse-reconciled coherent-state QKD.

All functions broadcast over numpy arrays. Rates are in bits per pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cvqkd.core import gain_from_distance
from cvqkd.estimation import apply_margin

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def i_ab(va, gain, xi, eta):
    """Alice-Bob Shannon information ``1/2 log2((eta G V_A + 1 + eta G xi) / (1 + eta G xi))``."""
    t = np.multiply(eta, gain)
    noise = 1.0 + t * xi
    return 0.5 * np.log2((t * va + noise) / noise)


def i_be_max(va, gain, xi, eta):
    """Upper bound on Eve's information about Bob's data, detector trusted.

    Raises ``ValueError`` when the bracket ``1 - G + G xi + G / (V_A + 1)`` is
    not positive.
    """
    va, gain, xi, eta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (va, gain, xi, eta)))
    bracket = 1.0 - gain + gain * xi + gain / (va + 1.0)
    if np.any(bracket <= 0):
        raise ValueError("conditional-variance bracket must be positive")
    num = eta * gain * va + 1.0 + eta * gain * xi
    den = eta / bracket + 1.0 - eta
    out = 0.5 * np.log2(num / den)
    return float(out) if out.ndim == 0 else out


def _paranoid(gain, xi, eta, v_el):
    # detector handed to Eve: fold efficiency into the channel, electronic noise into xi
    g = np.multiply(eta, gain)
    return g, xi + v_el / g, 1.0


def _mode_args(va, gain, xi, eta, mode, v_el):
    if mode == "realistic":
        return va, gain, xi, eta
    if mode == "paranoid":
        g, x, e = _paranoid(gain, xi, eta, v_el)
        return va, g, x, e
    raise ValueError(f"unknown mode {mode!r}")


def delta_i(va, gain, xi, eta, mode="realistic", v_el=0.0):
    args = _mode_args(va, gain, xi, eta, mode, v_el)
    return i_ab(*args) - i_be_max(*args)


def delta_i_eff(va, gain, xi, eta, beta, mode="realistic", v_el=0.0):
    """``beta * I_AB - I_BE``; may be negative."""
    if not np.all((0 < np.asarray(beta)) & (np.asarray(beta) <= 1)):
        raise ValueError("beta must lie in (0, 1]")
    args = _mode_args(va, gain, xi, eta, mode, v_el)
    return beta * i_ab(*args) - i_be_max(*args)


@dataclass(frozen=True)
class RateReport:
    va: float
    gain: float
    xi_used: float
    eta: float
    beta: float
    mode: str
    i_ab: float
    i_be_max: float
    delta_i: float
    delta_i_eff: float
    secret_rate: float
    raw_rate: float


def rate_report(
    va,
    gain,
    xi,
    eta,
    beta=1.0,
    mode="realistic",
    v_el=0.0,
    symbol_rate=1e6,
    data_fraction=0.8,
    reveal_fraction=0.05,
) -> RateReport:
    """Evaluate every rate at one operating point.

    ``secret_rate`` is ``delta_i_eff`` times the symbol rate, the data fraction
    of each frame and the unrevealed fraction, floored at zero; ``raw_rate`` is
    the bare symbol rate.
    """
    args = _mode_args(va, gain, xi, eta, mode, v_el)
    a = float(i_ab(*args))
    e = float(i_be_max(*args))
    eff = beta * a - e
    secret = max(0.0, eff) * symbol_rate * data_fraction * (1.0 - reveal_fraction)
    return RateReport(float(va), float(gain), float(xi), float(eta), float(beta), mode, a, e, a - e, eff, secret, symbol_rate)


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-3, max_iter: int = 200):
    """Maximise a unimodal ``f`` on ``[lo, hi]``; returns ``(x*, f(x*))``.

    Endpoints are compared against the interior optimum so monotone functions
    return the bound.
    """
    if lo > hi:
        raise ValueError("bounds inverted")
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    candidates = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    fx, x = max(candidates)
    return x, fx


def optimize_va(gain, xi40, eta, beta, bounds=(1.0, 100.0), mode="realistic", margin_out=0.0, tol=1e-3):
    """Best modulation variance when excess noise scales as ``xi40 * V_A / 40``.

    Returns ``(V_A*, delta_i_eff*)``. ``margin_out`` adds the output-referred
    security margin at each candidate.
    """
    lo, hi = bounds
    if lo > hi:
        raise ValueError("bounds inverted")

    def rate(va):
        xi = xi40 * va / 40.0
        if margin_out:
            xi = apply_margin(xi, gain, eta, margin_out)
        return float(delta_i_eff(va, gain, xi, eta, beta, mode))

    return golden_section_max(rate, lo, hi, tol)


@dataclass(frozen=True)
class RangeResult:
    distance: float
    capped: bool

    def __str__(self):
        return f">= {self.distance:g} km" if self.capped else f"{self.distance:.1f} km"


def rate_at_distance(d, va, xi40, eta, beta, attenuation=0.2, margin_out=0.0, optimize=False,
                     mode="realistic", proportional=True, bounds=(1.0, 100.0)):
    """``delta_i_eff`` at fiber length ``d``, optionally with V_A optimised."""
    g = gain_from_distance(d, attenuation)
    if optimize:
        return optimize_va(g, xi40, eta, beta, bounds, mode, margin_out)[1]
    xi = xi40 * va / 40.0 if proportional else xi40
    if margin_out:
        xi = apply_margin(xi, g, eta, margin_out)
    return float(delta_i_eff(va, g, xi, eta, beta, mode))


def max_distance(va=40.0, xi40=0.06, eta=0.6, beta=1.0, attenuation=0.2, margin_out=0.0,
                 optimize=False, mode="realistic", cap=100.0, tol=0.1, bounds=(1.0, 100.0)) -> RangeResult:
    """Largest fiber length with positive ``delta_i_eff``, by bisection to ``tol`` km.

    Returns distance 0 when the rate is already non-positive at 0 km and flags
    ``capped`` when it stays positive up to ``cap``.
    """
    def f(d):
        return rate_at_distance(d, va, xi40, eta, beta, attenuation, margin_out, optimize, mode, True, bounds)

    if f(0.0) <= 0:
        return RangeResult(0.0, False)
    if f(cap) > 0:
        return RangeResult(cap, True)
    lo, hi = 0.0, cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return RangeResult(lo, False)
