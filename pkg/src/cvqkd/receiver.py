"""Bob's time-resolved homodyne detector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cvqkd.core import DetectorParams, PulseState

X, P = 0, 1


@dataclass(frozen=True)
class Measurement:
    value: float
    quadrature: int
    pulse_index: int = 0


@dataclass(frozen=True)
class Calibration:
    shot_noise: float
    shot_noise_se: float
    electronic_noise: float
    electronic_noise_se: float


def choose_quadratures(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random X/P choice per pulse, independent of the pulses."""
    return rng.integers(0, 2, n, dtype=np.uint8)


def measure_batch(pulses, quadratures, det: DetectorParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorised homodyne measurement.

    The detector is a beamsplitter of transmission ``eta`` mixing in vacuum,
    followed by additive electronic noise, so each outcome is drawn from
    ``Normal(sqrt(eta) * mean_q, 1 + eta * excess_var + v_el)``.
    """
    q = np.asarray(quadratures)
    mean = np.where(q == X, pulses.mean_x, pulses.mean_p)
    var = 1.0 + det.efficiency * pulses.excess_var + det.electronic_noise
    return math.sqrt(det.efficiency) * mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def measure(pulse: PulseState, q: int, det: DetectorParams, rng, index: int = 0) -> Measurement:
    value = measure_batch(pulse, np.asarray(q), det, rng)
    return Measurement(float(value), int(q), index)


def calibrate(det: DetectorParams, n: int, rng: np.random.Generator) -> Calibration:
    """Two-step calibration: optical input off, then vacuum in.

    The optical-off run measures electronic noise alone; the vacuum run measures
    ``1 + v_el``. The shot-noise estimate is their difference. Standard errors
    use ``sqrt(2 / n) * variance``.
    """
    if n < 10_000:
        raise ValueError("calibration needs at least 10^4 samples")
    v = det.electronic_noise
    dark = math.sqrt(v) * rng.standard_normal(n)
    vac = math.sqrt(1.0 + v) * rng.standard_normal(n)
    v_dark = float(np.mean(dark**2))
    v_vac = float(np.mean(vac**2))
    k = math.sqrt(2.0 / n)
    return Calibration(
        shot_noise=v_vac - v_dark,
        shot_noise_se=k * math.hypot(v_vac, v_dark),
        electronic_noise=v_dark,
        electronic_noise_se=k * v_dark,
    )
