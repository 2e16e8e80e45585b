import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from cvqkd.estimation import (
    ChannelEstimate,
    ChannelEstimator,
    apply_margin,
    cross_check,
    estimate_block,
    estimate_excess_noise,
    estimate_gain,
    fit_estimate,
)


def synth(n, gain, xi, eta=0.6, va=40.0, v_el=0.0, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, math.sqrt(va), n)
    y = math.sqrt(eta * gain) * x + rng.normal(0, math.sqrt(1 + eta * gain * xi + v_el), n)
    return x, y


@pytest.mark.parametrize("gain,xi", [(1.0, 0.0), (1.0, 0.06), (0.5, 0.06), (0.1, 0.0)])
def test_estimates_within_three_se(gain, xi):
    x, y = synth(50_000, gain, xi, seed=int(gain * 100 + xi * 1000))
    e = fit_estimate(x, y, 0.6)
    assert abs(e.gain - gain) < 3 * e.gain_se
    assert abs(e.excess_noise - xi) < 3 * e.excess_noise_se


def test_coverage():
    # 100 blocks per grid point; +-3 SE intervals should cover
    hits, total = 0, 0
    for gain in (1.0, 0.5, 0.1):
        for xi in (0.0, 0.06):
            for s in range(100):
                x, y = synth(50_000, gain, xi, seed=10_000 + s)
                e = fit_estimate(x, y, 0.6)
                hits += abs(e.gain - gain) < 3 * e.gain_se
                hits += abs(e.excess_noise - xi) < 3 * e.excess_noise_se
                total += 2
    assert hits / total >= 0.99


def test_untrusted_electronic_noise_charged_to_channel():
    x, y = synth(200_000, 1.0, 0.0, v_el=0.01, seed=4)
    xi_untrusted, _ = estimate_excess_noise(x, y, estimate_gain(x, y, 0.6)[0], 0.6, 0.0)
    xi_trusted, se = estimate_excess_noise(x, y, estimate_gain(x, y, 0.6)[0], 0.6, 0.01)
    assert xi_untrusted - xi_trusted == pytest.approx(0.01 / 0.6, rel=0.05)
    assert abs(xi_trusted) < 3 * se


def test_margin_examples():
    assert apply_margin(0.06, 1.0, 0.6, 0.02) == pytest.approx(0.09333, abs=1e-5)
    # at the 55 km gain 10^-1.1
    assert apply_margin(0.06, 10 ** -1.1, 0.6, 0.02) == pytest.approx(0.4797, abs=1e-4)
    assert apply_margin(0.06, 0.0794, 0.6, 0.02) == pytest.approx(0.06 + 0.02 / 0.04764, rel=1e-12)
    assert apply_margin(-0.01, 1.0, 0.6, 0.0) == 0.0
    assert apply_margin(0.05, 1.0, 0.6, 0.0) == 0.05
    with pytest.raises(ValueError):
        apply_margin(0.05, 1.0, 0.6, -0.1)


@given(xi=st.floats(-0.5, 3), g1=st.floats(0.01, 1), g2=st.floats(0.01, 1), m=st.floats(0, 0.1))
def test_secure_monotone_in_gain(xi, g1, g2, m):
    lo, hi = sorted((g1, g2))
    s_lo, s_hi = apply_margin(xi, lo, 0.6, m), apply_margin(xi, hi, 0.6, m)
    assert s_hi <= s_lo + 1e-12
    assert s_lo >= xi


def test_tiny_gain_unestimable():
    x, y = synth(1000, 1.0, 0.0)
    with pytest.raises(ValueError):
        estimate_excess_noise(x, y, 1e-5, 0.6)


def test_too_few_pairs():
    with pytest.raises(ValueError):
        estimate_gain(np.ones(10), np.ones(10), 0.6)


def test_cross_check_flags_disagreement():
    a = ChannelEstimate(1.0, 0.06, 0.09, 1000, 0.01, 0.02)
    b = ChannelEstimate(1.0, 0.2, 0.23, 1000, 0.01, 0.02)
    assert cross_check(a, b)
    assert not cross_check(a, a)


def test_estimate_block_tamper():
    t = synth(10_000, 1.0, 0.06, seed=1)
    r_ok = synth(2_000, 1.0, 0.06, seed=2)
    r_bad = synth(2_000, 1.0, 2.0, seed=3)
    pooled, _, _ = estimate_block(t, r_ok, 0.6)
    assert not pooled.tamper_flag and pooled.n_used == 12_000
    assert estimate_block(t, r_bad, 0.6)[0].tamper_flag


def test_sklearn_estimator_api():
    x, y = synth(20_000, 0.5, 0.06, seed=7)
    est = ChannelEstimator(efficiency=0.6, margin_out=0.02)
    assert clone(est).get_params() == est.get_params()
    est.fit(x.reshape(-1, 1), y)
    assert est.gain_ == pytest.approx(0.5, abs=0.02)
    np.testing.assert_allclose(est.predict(x[:5]), est.slope_ * x[:5])
    assert est.estimate_.excess_noise_secure >= est.estimate_.excess_noise
    assert est.score(x.reshape(-1, 1), y) > 0.5
    with pytest.raises(ValueError):
        est.fit(np.ones((10, 2)), np.ones(10))


def test_overshoot_flag():
    assert ChannelEstimate(1.06, 0, 0, 1, 0, 0).overshoot
    assert not ChannelEstimate(1.04, 0, 0, 1, 0, 0).overshoot
