"""Alice's source: truncated-Gaussian data symbols, a fixed test-pulse pattern
and modulator imperfections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cvqkd.core import DATA, TEST, PulseBatch, Symbol

TRUNCATION_SIGMAS = 4.0
# 8-point constellation, cycled over the test slots of a frame
TEST_PHASES_DEG = (0, 90, 180, 270, 45, 135, 225, 315)


def truncated_variance_factor(sigmas: float = TRUNCATION_SIGMAS) -> float:
    """Per-quadrature variance of a radially truncated 2-D Gaussian, relative to V_A.

    For radius cut ``k * sqrt(V_A)``, this is ``(1 - (1 + t) e^-t) / (1 - e^-t)``
    with ``t = k**2 / 2``; 0.997315 at ``k = 4``.
    """
    t = sigmas**2 / 2.0
    return (1.0 - (1.0 + t) * math.exp(-t)) / -math.expm1(-t)


def draw_symbols(va: float, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` radially truncated Gaussian symbols by redraw-until-accepted."""
    if va <= 0:
        raise ValueError("modulation variance must be positive")
    sd = math.sqrt(va)
    r2max = (TRUNCATION_SIGMAS * sd) ** 2
    x = np.empty(n)
    p = np.empty(n)
    filled = 0
    while filled < n:
        # acceptance is 1 - e^-8, so one extra percent almost always suffices
        m = int((n - filled) * 1.01) + 16
        cx = rng.normal(0.0, sd, m)
        cp = rng.normal(0.0, sd, m)
        ok = cx * cx + cp * cp <= r2max
        cx, cp = cx[ok], cp[ok]
        take = min(n - filled, cx.size)
        x[filled : filled + take] = cx[:take]
        p[filled : filled + take] = cp[:take]
        filled += take
    return x, p


def draw_symbol(va: float, rng: np.random.Generator) -> Symbol:
    x, p = draw_symbols(va, 1, rng)
    return Symbol(float(x[0]), float(p[0]))


def make_test_symbol(index: int, va: float, test_pulses: int = 20) -> Symbol:
    """Deterministic maximum-radius test symbol for slot ``index``."""
    if not 0 <= index < test_pulses:
        raise IndexError(f"test slot {index} outside [0, {test_pulses})")
    r = TRUNCATION_SIGMAS * math.sqrt(va)
    phase = math.radians(TEST_PHASES_DEG[index % len(TEST_PHASES_DEG)])
    # snap exact zeros so axis-aligned entries are clean
    c, s = round(math.cos(phase), 15), round(math.sin(phase), 15)
    return Symbol(r * c, r * s)


@dataclass(frozen=True)
class FramePlan:
    """Frame layout known to both endpoints: test slots first, then data slots."""

    frame_len: int = 100
    test_pulses: int = 20
    va: float = 40.0

    @property
    def data_slots(self) -> int:
        return self.frame_len - self.test_pulses

    @property
    def test_pattern(self) -> tuple[Symbol, ...]:
        return tuple(make_test_symbol(i, self.va, self.test_pulses) for i in range(self.test_pulses))

    def test_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        pat = self.test_pattern
        return np.array([s.x for s in pat]), np.array([s.p for s in pat])

    def slot_kinds(self) -> np.ndarray:
        kinds = np.full(self.frame_len, DATA, dtype=np.uint8)
        kinds[: self.test_pulses] = TEST
        return kinds

    def block_kinds(self, n_frames: int) -> np.ndarray:
        return np.tile(self.slot_kinds(), n_frames)

    @classmethod
    def from_config(cls, config) -> "FramePlan":
        return cls(config.frame_len, config.test_pulses, config.va)


class Emitter:
    """Seedable source producing frames of pulses plus Alice's intended symbols.

    Parameters
    ----------
    va : float
        Modulation variance per quadrature before truncation.
    modulator_variance : float
        Per-quadrature Gaussian error between intended symbol and emitted mean.
    phase_noise : float
        Averaged phase-noise variance, carried as excess noise on every pulse.
    """

    def __init__(self, va, modulator_variance, phase_noise, plan: FramePlan, rng):
        self.va = va
        self.modulator_variance = modulator_variance
        self.phase_noise = phase_noise
        self.plan = plan
        self.rng = rng

    @classmethod
    def from_config(cls, config, rng) -> "Emitter":
        return cls(
            config.va,
            config.modulator_variance,
            config.phase_noise_variance,
            FramePlan.from_config(config),
            rng,
        )

    def emit(self, n_frames: int = 1) -> tuple[np.ndarray, np.ndarray, PulseBatch]:
        """Return intended symbols ``(x, p)`` and the emitted pulses for ``n_frames``."""
        plan = self.plan
        n = n_frames * plan.frame_len
        tx, tp = plan.test_arrays()
        x = np.empty((n_frames, plan.frame_len))
        p = np.empty((n_frames, plan.frame_len))
        x[:, : plan.test_pulses] = tx
        p[:, : plan.test_pulses] = tp
        dx, dp = draw_symbols(self.va, n_frames * plan.data_slots, self.rng)
        x[:, plan.test_pulses :] = dx.reshape(n_frames, plan.data_slots)
        p[:, plan.test_pulses :] = dp.reshape(n_frames, plan.data_slots)
        x = x.ravel()
        p = p.ravel()
        if self.modulator_variance > 0:
            sd = math.sqrt(self.modulator_variance)
            mx = x + self.rng.normal(0.0, sd, n)
            mp = p + self.rng.normal(0.0, sd, n)
        else:
            mx, mp = x.copy(), p.copy()
        pulses = PulseBatch(mx, mp, np.full(n, self.phase_noise), plan.block_kinds(n_frames))
        return x, p, pulses


def emit_frame(config, rng):
    """Emit one frame; returns ``(symbols, pulses)`` with symbols as a list of :class:`Symbol`."""
    x, p, pulses = Emitter.from_config(config, rng).emit(1)
    return [Symbol(float(a), float(b)) for a, b in zip(x, p)], pulses
