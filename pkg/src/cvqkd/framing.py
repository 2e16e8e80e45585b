"""Frame/block recovery: synchronisation on the test-pulse pattern, relative
phase estimation and test/data demultiplexing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cvqkd.core import DATA, TEST
from cvqkd.receiver import X


class SyncError(RuntimeError):
    """The test pattern could not be located unambiguously."""


class PhaseError(RuntimeError):
    """Test pulses carry too little signal to fix the relative phase."""


def phase_walk(n_frames: int, step: float, rng: np.random.Generator, theta0: float = 0.0) -> np.ndarray:
    """Per-frame relative phase: a Wiener walk of standard deviation ``step`` per frame."""
    if step == 0 or n_frames == 0:
        return np.full(n_frames, float(theta0))
    incr = rng.normal(0.0, step, n_frames)
    incr[0] = 0.0
    return theta0 + np.cumsum(incr)


def detect_offset(values, plan, contrast: float = 2.0, min_z: float = 8.0) -> int:
    """Cyclic offset of the first test slot in a measurement stream.

    The energy profile ``E[y^2]`` per slot (modulo the frame length) is
    correlated with the contiguous block of test slots. The peak must beat the
    best candidate outside its main lobe by ``contrast`` and stand ``min_z``
    standard errors above the data-slot energy.
    """
    y = np.asarray(values, dtype=float)
    L, T = plan.frame_len, plan.test_pulses
    n_frames = y.size // L
    if n_frames < 2:
        raise ValueError("need at least two frames of measurements")
    e = (y[: n_frames * L] ** 2).reshape(n_frames, L)
    profile = e.mean(axis=0)
    window = np.array([np.take(profile, np.arange(o, o + T), mode="wrap").sum() for o in range(L)])
    centred = window - T * profile.mean()
    best = int(np.argmax(centred))
    dist = np.abs((np.arange(L) - best + L // 2) % L - L // 2)
    side = centred[dist >= T]
    second = float(side.max()) if side.size else 0.0
    if centred[best] <= 0 or (second > 0 and centred[best] < contrast * second):
        raise SyncError("ambiguous test-pattern correlation")

    inside = np.zeros(L, dtype=bool)
    inside[np.arange(best, best + T) % L] = True
    a, b = e[:, inside].ravel(), e[:, ~inside].ravel()
    z = (a.mean() - b.mean()) / math.sqrt(a.var() / a.size + b.var() / b.size)
    if not z >= min_z:
        raise SyncError(f"test pattern not above noise (z = {z:.1f})")
    return best


@dataclass(frozen=True)
class PhaseEstimate:
    theta: float
    theta_se: float
    amplitude: float


def recover_phase(values, quadratures, sym_x, sym_p, min_snr: float = 5.0) -> PhaseEstimate:
    """Least-squares relative phase from test pulses averaged over a block.

    With ``u = A cos(theta)`` and ``v = A sin(theta)``, an X outcome has mean
    ``u x - v p`` and a P outcome ``v x + u p``. Returns theta in (-pi, pi].
    """
    y = np.asarray(values, dtype=float)
    q = np.asarray(quadratures)
    x = np.asarray(sym_x, dtype=float)
    p = np.asarray(sym_p, dtype=float)
    if y.size == 0:
        raise PhaseError("no test pulses")
    isx = q == X
    m = np.column_stack([np.where(isx, x, p), np.where(isx, -p, x)])
    coef, *_ = np.linalg.lstsq(m, y, rcond=None)
    u, v = coef
    amp = math.hypot(u, v)
    resid = y - m @ coef
    dof = max(y.size - 2, 1)
    sigma = math.sqrt(float(resid @ resid) / dof)
    r2 = float(np.sum(x * x + p * p))
    if r2 == 0 or amp * math.sqrt(r2) < min_snr * sigma:
        raise PhaseError("test pulses indistinguishable from noise")
    theta = math.atan2(v, u)
    if theta == -math.pi:
        theta = math.pi
    # tangential standard error; regressor rows have norm^2 = x^2 + p^2
    return PhaseEstimate(theta, sigma / (amp * math.sqrt(r2)), amp)


def correct_symbols(x, p, theta):
    """Rotate Alice's symbol record by the recovered phase (Bob's data stays untouched)."""
    c, s = math.cos(theta), math.sin(theta)
    return x * c - p * s, x * s + p * c


@dataclass
class Block:
    """Bob's view of one aligned block."""

    values: np.ndarray
    quadratures: np.ndarray
    kinds: np.ndarray
    offset: int = 0
    block_phase: float = 0.0
    frame_len: int = 100

    @property
    def test_mask(self) -> np.ndarray:
        return self.kinds == TEST

    @property
    def data_mask(self) -> np.ndarray:
        return self.kinds == DATA

    @property
    def n_frames(self) -> int:
        return self.values.size // self.frame_len


def demultiplex(values, quadratures, plan, n_frames: int, offset: int = 0) -> Block:
    """Cut an aligned block out of a stream and tag every slot test or data."""
    n = n_frames * plan.frame_len
    y = np.asarray(values)[offset : offset + n]
    q = np.asarray(quadratures)[offset : offset + n]
    if y.size != n:
        raise ValueError("stream too short for the requested block")
    return Block(y, q, plan.block_kinds(n_frames), offset, 0.0, plan.frame_len)
