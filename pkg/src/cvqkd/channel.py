"""Quantum channel: loss, excess noise, phase rotation and eavesdropping models.

Vacuum noise is never added here. The receiver adds it once, at measurement,
so a pure-loss channel only rescales means by ``sqrt(G)`` and excess variance
by ``G``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from cvqkd.core import DATA, ChannelParams, PulseBatch, PulseState


def transmit(pulse, params: ChannelParams):
    """Propagate a :class:`PulseState` or :class:`PulseBatch` through a lossy noisy channel."""
    g = params.gain
    root = math.sqrt(g)
    return dataclasses.replace(
        pulse,
        mean_x=pulse.mean_x * root,
        mean_p=pulse.mean_p * root,
        excess_var=g * (pulse.excess_var + params.excess_noise),
    )


def rotate(pulse, theta):
    """Rotate pulse means by the signal/local-oscillator phase ``theta`` (scalar or per pulse)."""
    c, s = np.cos(theta), np.sin(theta)
    x, p = pulse.mean_x, pulse.mean_p
    nx, np_ = x * c - p * s, x * s + p * c
    if isinstance(pulse, PulseState):
        nx, np_ = float(nx), float(np_)
    return dataclasses.replace(pulse, mean_x=nx, mean_p=np_)


def inject_excess(pulse, xi_add: float):
    """Eve adds Gaussian noise of input-referred variance ``xi_add``."""
    return dataclasses.replace(pulse, excess_var=pulse.excess_var + xi_add)


def intercept_resend(pulse, rng: np.random.Generator, mask=None):
    """Simultaneous two-quadrature measurement by Eve followed by re-preparation.

    Each of Eve's outcomes carries noise of variance ``2 + excess_var`` around
    the pulse mean (own vacuum, splitting penalty, accumulated excess). She
    resends a coherent state centred on her outcome. Returns
    ``(new_pulse, (x_e, p_e))``; ``mask`` restricts the attack to a subset of a batch.
    """
    sd = np.sqrt(2.0 + np.asarray(pulse.excess_var, dtype=float))
    shape = np.shape(pulse.mean_x)
    x_e = pulse.mean_x + sd * rng.standard_normal(shape)
    p_e = pulse.mean_p + sd * rng.standard_normal(shape)
    if isinstance(pulse, PulseState):
        out = dataclasses.replace(pulse, mean_x=float(x_e), mean_p=float(p_e), excess_var=0.0)
        return out, (float(x_e), float(p_e))
    if mask is None:
        mask = np.ones(shape, dtype=bool)
    out = PulseBatch(
        np.where(mask, x_e, pulse.mean_x),
        np.where(mask, p_e, pulse.mean_p),
        np.where(mask, 0.0, pulse.excess_var),
        pulse.kind,
    )
    return out, (x_e[mask], p_e[mask])


@dataclass
class AttackModel:
    """Eavesdropper interposed at Alice's output.

    ``variant`` is ``"none"``, ``"inject"`` (adds ``xi_add``) or
    ``"intercept-resend"``. ``fraction`` attacks a random subset of pulses
    and ``data_only`` spares the test slots.
    """

    variant: str = "none"
    xi_add: float = 0.0
    fraction: float = 1.0
    data_only: bool = False
    eve_log: list = field(default_factory=list)

    def _mask(self, batch: PulseBatch, rng) -> np.ndarray:
        mask = np.ones(len(batch), dtype=bool)
        if self.data_only:
            mask &= batch.kind == DATA
        if self.fraction < 1.0:
            mask &= rng.random(len(batch)) < self.fraction
        return mask

    def apply(self, batch: PulseBatch, rng) -> PulseBatch:
        if self.variant == "none":
            return batch
        mask = self._mask(batch, rng)
        if self.variant == "inject":
            return dataclasses.replace(batch, excess_var=batch.excess_var + np.where(mask, self.xi_add, 0.0))
        if self.variant == "intercept-resend":
            out, (x_e, p_e) = intercept_resend(batch, rng, mask)
            self.eve_log.append((np.flatnonzero(mask), x_e, p_e))
            return out
        raise ValueError(f"unknown attack {self.variant!r}")


class PhysicsChannel:
    """Stream transformer applied to pulses on the physics link.

    Order: attack at Alice's output, then fiber loss and excess noise, then the
    slowly drifting relative phase, frozen within a frame.
    """

    def __init__(self, params: ChannelParams, attack: AttackModel | None, rng, frame_phases=None, frame_len=100):
        self.params = params
        self.attack = attack or AttackModel()
        self.rng = rng
        self.frame_phases = frame_phases
        self.frame_len = frame_len

    @classmethod
    def from_config(cls, config, rng):
        from cvqkd.framing import phase_walk

        attack = AttackModel(
            config.attack, config.attack_xi, config.attack_fraction, config.attack_data_only
        )
        n_frames = config.frames_per_block * config.blocks
        phases = phase_walk(n_frames, config.phase_drift, rng, config.phase_offset)
        return cls(config.channel, attack, rng, phases, config.frame_len)

    def __call__(self, batch: PulseBatch, start: int = 0) -> PulseBatch:
        out = transmit(self.attack.apply(batch, self.rng), self.params)
        if self.frame_phases is not None:
            frame = (start + np.arange(len(batch))) // self.frame_len
            out = rotate(out, self.frame_phases[np.minimum(frame, len(self.frame_phases) - 1)])
        return out
