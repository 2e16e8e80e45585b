"""Per-block channel estimation: gain, input-referred excess noise, the
test-pulse versus revealed-sample cross-check and the security margin."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted, column_or_1d

MIN_PAIRS = 500


@dataclass(frozen=True)
class ChannelEstimate:
    gain: float
    excess_noise: float
    excess_noise_secure: float
    n_used: int
    gain_se: float
    excess_noise_se: float
    tamper_flag: bool = False
    slope: float = float("nan")
    residual_variance: float = float("nan")
    modulation_variance: float = float("nan")

    @property
    def overshoot(self) -> bool:
        """Gain estimate above the tolerated statistical overshoot."""
        return self.gain > 1.05


def _pairs(x_a, y_b):
    x = np.asarray(x_a, dtype=float).ravel()
    y = np.asarray(y_b, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("alice and bob arrays differ in length")
    return x, y


def estimate_gain(x_a, y_b, eta: float, min_pairs: int = MIN_PAIRS) -> tuple[float, float]:
    """Regression-through-origin gain: ``sqrt(eta G) = sum(x y) / sum(x^2)``."""
    x, y = _pairs(x_a, y_b)
    if x.size < min_pairs:
        raise ValueError(f"need at least {min_pairs} pairs, got {x.size}")
    sxx = float(x @ x)
    if sxx == 0:
        raise ValueError("alice regressor is identically zero")
    slope = float(x @ y) / sxx
    resid = y - slope * x
    sigma2 = float(resid @ resid) / max(x.size - 1, 1)
    se_slope = math.sqrt(sigma2 / sxx)
    return slope * slope / eta, 2.0 * abs(slope) * se_slope / eta


def estimate_excess_noise(x_a, y_b, gain: float, eta: float, v_el: float = 0.0) -> tuple[float, float]:
    """Input-referred excess noise from the variance identity.

    ``xi = (<y^2> - eta G <x^2> - 1 - v_el) / (eta G)``; may come out slightly
    negative. ``v_el`` is the trusted part of the electronic noise; anything not
    subtracted here is charged to the channel.
    """
    x, y = _pairs(x_a, y_b)
    t = eta * gain
    if t < 1e-4:
        raise ValueError("eta * G below 1e-4: excess noise unestimable")
    resid_var = float(np.mean(y * y)) - t * float(np.mean(x * x))
    xi = (resid_var - 1.0 - v_el) / t
    se = abs(resid_var) * math.sqrt(2.0 / x.size) / t
    return xi, se


def apply_margin(xi: float, gain: float, eta: float, margin_out: float) -> float:
    """Floor ``xi`` at zero and add an output-referred margin converted to the input."""
    if margin_out < 0:
        raise ValueError("margin must be non-negative")
    return max(xi, 0.0) + margin_out / (eta * gain)


def cross_check(a: ChannelEstimate, b: ChannelEstimate, n_sigma: float = 4.0) -> bool:
    """True when gain or excess noise disagree by more than ``n_sigma`` combined SEs."""
    dg = abs(a.gain - b.gain)
    dx = abs(a.excess_noise - b.excess_noise)
    sg = math.hypot(a.gain_se, b.gain_se)
    sx = math.hypot(a.excess_noise_se, b.excess_noise_se)
    return bool(dg > n_sigma * sg or dx > n_sigma * sx)


class ChannelEstimator(RegressorMixin, BaseEstimator):
    """Fit channel parameters from matched (Alice symbol, Bob outcome) pairs.

    Parameters
    ----------
    efficiency : float
        Trusted detector efficiency.
    electronic_noise : float
        Trusted electronic noise subtracted before attributing noise to the channel.
    margin_out : float
        Output-referred security margin.
    min_samples : int
        Minimum number of pairs.

    Attributes
    ----------
    gain_, gain_se_ : float
    excess_noise_, excess_noise_se_ : float
    excess_noise_secure_ : float
    slope_, residual_variance_, modulation_variance_ : float
    n_samples_ : int
    """

    def __init__(self, efficiency=0.6, electronic_noise=0.0, margin_out=0.02, min_samples=MIN_PAIRS):
        self.efficiency = efficiency
        self.electronic_noise = electronic_noise
        self.margin_out = margin_out
        self.min_samples = min_samples

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("X must hold a single quadrature column")
            X = X[:, 0]
        y = column_or_1d(y)
        check_consistent_length(X, y)
        eta = self.efficiency
        self.gain_, self.gain_se_ = estimate_gain(X, y, eta, self.min_samples)
        self.excess_noise_, self.excess_noise_se_ = estimate_excess_noise(
            X, y, self.gain_, eta, self.electronic_noise
        )
        self.excess_noise_secure_ = apply_margin(self.excess_noise_, self.gain_, eta, self.margin_out)
        self.slope_ = math.sqrt(eta * self.gain_) * (1.0 if float(X @ y) >= 0 else -1.0)
        self.modulation_variance_ = float(np.mean(X * X))
        self.residual_variance_ = float(np.mean(y * y)) - eta * self.gain_ * self.modulation_variance_
        self.n_samples_ = X.size
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        X = check_array(X, ensure_2d=False)
        return self.slope_ * np.asarray(X, dtype=float).reshape(-1)

    @property
    def estimate_(self) -> ChannelEstimate:
        check_is_fitted(self, "slope_")
        return ChannelEstimate(
            gain=self.gain_,
            excess_noise=self.excess_noise_,
            excess_noise_secure=self.excess_noise_secure_,
            n_used=self.n_samples_,
            gain_se=self.gain_se_,
            excess_noise_se=self.excess_noise_se_,
            slope=self.slope_,
            residual_variance=self.residual_variance_,
            modulation_variance=self.modulation_variance_,
        )


def fit_estimate(x_a, y_b, eta, v_el=0.0, margin_out=0.0) -> ChannelEstimate:
    return ChannelEstimator(eta, v_el, margin_out).fit(x_a, y_b).estimate_


def estimate_block(test_pairs, revealed_pairs, eta, v_el=0.0, margin_out=0.02, n_sigma=4.0):
    """Pooled block estimate plus the tamper cross-check.

    Returns ``(pooled, test_only, revealed_only)``; the pooled estimate carries
    the tamper flag.
    """
    tx, ty = test_pairs
    rx, ry = revealed_pairs
    test = fit_estimate(tx, ty, eta, v_el, margin_out)
    rev = fit_estimate(rx, ry, eta, v_el, margin_out)
    pooled = fit_estimate(np.concatenate([tx, rx]), np.concatenate([ty, ry]), eta, v_el, margin_out)
    flag = cross_check(test, rev, n_sigma) or pooled.overshoot
    return replace(pooled, tamper_flag=flag), test, rev
