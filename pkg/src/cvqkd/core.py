"""Unit system, shared value types and closed-form noise/geometry relations.

Every variance is in shot-noise units (vacuum quadrature variance = 1.0) and
every amplitude in square-root shot-noise units. Excess noise ``xi`` is always
stored referred to the channel input; output-referred values are derived on
demand as ``eta * G * xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VACUUM_VARIANCE = 1.0

TEST = 0
DATA = 1


def _check_variance(name: str, value: float) -> None:
    if not (value >= 0.0) or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite non-negative variance, got {value!r}")


@dataclass(frozen=True)
class ChannelParams:
    """Quantum channel description: intensity gain and input-referred excess noise."""

    gain: float
    excess_noise: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.gain <= 1.0):
            raise ValueError(f"gain must lie in (0, 1], got {self.gain!r}")
        _check_variance("excess_noise", self.excess_noise)


@dataclass(frozen=True)
class DetectorParams:
    """Homodyne detector: quantum efficiency and output-referred electronic noise."""

    efficiency: float = 0.6
    electronic_noise: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.efficiency <= 1.0):
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency!r}")
        _check_variance("electronic_noise", self.electronic_noise)


@dataclass(frozen=True)
class Symbol:
    """Alice's intended displacement of one coherent state."""

    x: float
    p: float

    @property
    def radius(self) -> float:
        return math.hypot(self.x, self.p)


@dataclass(frozen=True)
class PulseState:
    """One optical pulse in flight.

    ``excess_var`` is the accumulated above-vacuum noise referred to the point
    of measurement; the vacuum contribution is added once, by the receiver.
    """

    mean_x: float
    mean_p: float
    excess_var: float = 0.0
    kind: int = DATA

    def __post_init__(self):
        _check_variance("excess_var", self.excess_var)


@dataclass
class PulseBatch:
    """Column-oriented batch of pulses, the vectorised counterpart of :class:`PulseState`."""

    mean_x: np.ndarray
    mean_p: np.ndarray
    excess_var: np.ndarray
    kind: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean_x = np.asarray(self.mean_x, dtype=float)
        self.mean_p = np.asarray(self.mean_p, dtype=float)
        self.excess_var = np.broadcast_to(
            np.asarray(self.excess_var, dtype=float), self.mean_x.shape
        ).copy()
        if self.kind is None:
            self.kind = np.full(self.mean_x.shape, DATA, dtype=np.uint8)
        else:
            self.kind = np.asarray(self.kind, dtype=np.uint8)
        if not (self.mean_x.shape == self.mean_p.shape == self.kind.shape):
            raise ValueError("PulseBatch columns must share one shape")

    def __len__(self):
        return self.mean_x.shape[0]

    def __getitem__(self, idx):
        return PulseBatch(self.mean_x[idx], self.mean_p[idx], self.excess_var[idx], self.kind[idx])

    @classmethod
    def vacuum(cls, n: int) -> "PulseBatch":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.full(n, DATA, dtype=np.uint8))

    @classmethod
    def concat(cls, batches) -> "PulseBatch":
        batches = list(batches)
        return cls(
            np.concatenate([b.mean_x for b in batches]),
            np.concatenate([b.mean_p for b in batches]),
            np.concatenate([b.excess_var for b in batches]),
            np.concatenate([b.kind for b in batches]),
        )

    def pulse(self, i: int) -> PulseState:
        return PulseState(
            float(self.mean_x[i]), float(self.mean_p[i]), float(self.excess_var[i]), int(self.kind[i])
        )


def total_added_noise(params: ChannelParams) -> float:
    """Total input-referred added noise ``chi = (1 - G) / G + xi``."""
    if params.gain <= 0:
        raise ValueError("zero gain adds infinite noise")
    return (1.0 - params.gain) / params.gain + params.excess_noise


def gain_from_distance(distance_km, attenuation_db_per_km: float = 0.2):
    """Fiber intensity transmission ``10 ** (-alpha * d / 10)``.

    Accepts scalars or arrays.
    """
    d = np.asarray(distance_km, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    if attenuation_db_per_km <= 0:
        raise ValueError("attenuation must be positive")
    g = 10.0 ** (-attenuation_db_per_km * d / 10.0)
    return float(g) if g.ndim == 0 else g


def distance_from_gain(gain, attenuation_db_per_km: float = 0.2):
    """Inverse of :func:`gain_from_distance`."""
    g = np.asarray(gain, dtype=float)
    if np.any(g <= 0) or np.any(g > 1):
        raise ValueError("gain must lie in (0, 1]")
    if attenuation_db_per_km <= 0:
        raise ValueError("attenuation must be positive")
    d = -10.0 * np.log10(g) / attenuation_db_per_km
    return float(d) if d.ndim == 0 else d
