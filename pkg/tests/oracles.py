"""Independent reference computations used by the tests.

Nothing here imports the package's formulas; everything is rebuilt from
covariance matrices, dense matrices or numerical integration.
"""

import numpy as np
from scipy import integrate, stats


def epr_covariance(va, gain, xi):
    """One-quadrature covariance of Alice's EPR mode and the channel output."""
    v = va + 1.0
    chi = (1.0 - gain) / gain + xi
    c = np.sqrt(gain * (v * v - 1.0))
    return np.array([[v, c], [c, gain * (v + chi)]])


def conditional(cov, keep, given):
    a = cov[keep, keep]
    b = cov[keep, given]
    return a - b * b / cov[given, given]


def shannon_rates(va, gain, xi, eta):
    """``(I_AB, I_BE)`` from Gaussian conditioning.

    Bob's quadrature after the detector is ``eta * out + 1 - eta`` in
    variance. Eve's conditional variance of Bob's channel output is bounded by
    the inverse of Alice's (conjugate) conditional variance of it.
    """
    cov = epr_covariance(va, gain, xi)
    v_b = eta * cov[1, 1] + 1.0 - eta
    v_b_given_a = eta * conditional(cov, 1, 0) + 1.0 - eta
    v_b_given_e = eta / conditional(cov, 1, 0) + 1.0 - eta
    # Alice holds a coherent-state record, so her knowledge is the PM one:
    # Bob's variance given Alice's symbol
    v_b_given_x = eta * gain * xi + 1.0
    i_ab = 0.5 * np.log2(v_b / v_b_given_x)
    i_be = 0.5 * np.log2(v_b / v_b_given_e)
    return float(i_ab), float(i_be), float(v_b_given_a)


def toeplitz_hash(bits, seed, length):
    """Dense GF(2) product with ``T[i, j] = seed[i + n - 1 - j]``."""
    bits = np.asarray(bits, dtype=np.int64)
    seed = np.asarray(seed, dtype=np.int64)
    n = bits.size
    t = np.array([[seed[i + n - 1 - j] for j in range(n)] for i in range(length)], dtype=np.int64)
    return (t @ bits) % 2


def conditional_entropy_floor(edges, slope, noise_var, va):
    """``H(Q(Y) | X)`` in bits per symbol for ``Y = slope X + N``, ``X ~ N(0, va)``.

    ``edges`` are the inner interval boundaries of the quantiser.
    """
    sd = np.sqrt(noise_var)
    cuts = np.concatenate([[-np.inf], np.asarray(edges, dtype=float), [np.inf]])

    def h_given(x):
        c = stats.norm.cdf((cuts - slope * x) / sd)
        p = np.diff(c)
        p = p[p > 0]
        return float(-(p * np.log2(p)).sum())

    f = lambda x: h_given(x) * stats.norm.pdf(x, scale=np.sqrt(va))
    lim = 8 * np.sqrt(va)
    val, _ = integrate.quad(f, -lim, lim, limit=400, points=[0.0])
    return val
