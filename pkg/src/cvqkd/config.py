"""Session configuration and its flat ``key = value`` text format.

One key per line, ``#`` starts a comment, blank lines are ignored and unknown
keys are rejected::

    va = 40
    eta = 0.6
    distance = 25      # overrides gain
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from cvqkd.core import ChannelParams, DetectorParams, gain_from_distance

ATTACKS = ("none", "intercept-resend", "inject")
MODES = ("realistic", "paranoid")


@dataclass(frozen=True)
class SessionConfig:
    """All physical and protocol parameters of one session.

    ``modulation_noise`` and ``phase_noise`` default to 0.04 and 0.01 shot-noise
    units at ``va = 40`` and scale linearly with ``va``.
    """

    va: float = 40.0
    eta: float = 0.6
    v_el: float = 0.01
    gain: float = 1.0
    distance: Optional[float] = None
    xi: float = 0.0
    modulation_noise: Optional[float] = None
    phase_noise: Optional[float] = None
    frame_len: int = 100
    test_pulses: int = 20
    block_len: int = 50000
    blocks: int = 1
    symbol_rate: float = 1e6
    margin_out: float = 0.02
    beta: float = 0.8
    attenuation: float = 0.2
    reveal_fraction: float = 0.05
    seed: int = 42
    mode: str = "realistic"
    attack: str = "none"
    attack_xi: float = 0.0
    attack_fraction: float = 1.0
    attack_data_only: bool = False
    phase_offset: float = 0.0
    phase_drift: float = 1e-4
    link_delay: int = 0
    n_slices: int = 0
    safety_bits: int = 128
    trust_electronic_noise: bool = False
    batch_size: int = 1000
    calibration_samples: int = 100000

    def __post_init__(self):
        if self.va <= 0:
            raise ValueError("va must be positive")
        if not 0 < self.test_pulses < self.frame_len:
            raise ValueError("test_pulses must lie in (0, frame_len)")
        if self.block_len <= 0 or self.block_len % self.frame_len:
            raise ValueError("block_len must be a positive multiple of frame_len")
        if not 0 < self.reveal_fraction < 1:
            raise ValueError("reveal_fraction must lie in (0, 1)")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.blocks < 1:
            raise ValueError("blocks must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.attack not in ATTACKS:
            raise ValueError(f"attack must be one of {ATTACKS}")
        if not 0 <= self.attack_fraction <= 1:
            raise ValueError("attack_fraction must lie in [0, 1]")
        if not 0 <= self.link_delay < self.frame_len:
            raise ValueError("link_delay must lie in [0, frame_len)")
        if self.margin_out < 0:
            raise ValueError("margin_out must be non-negative")
        # validates ranges
        self.detector
        self.channel

    @property
    def detector(self) -> DetectorParams:
        return DetectorParams(self.eta, self.v_el)

    @property
    def channel_gain(self) -> float:
        if self.distance is not None:
            return gain_from_distance(self.distance, self.attenuation)
        return self.gain

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.channel_gain, self.xi)

    @property
    def modulator_variance(self) -> float:
        if self.modulation_noise is not None:
            return self.modulation_noise
        return 0.04 * self.va / 40.0

    @property
    def phase_noise_variance(self) -> float:
        if self.phase_noise is not None:
            return self.phase_noise
        return 0.01 * self.va / 40.0

    @property
    def data_per_frame(self) -> int:
        return self.frame_len - self.test_pulses

    @property
    def frames_per_block(self) -> int:
        return self.block_len // self.frame_len

    def replace(self, **changes) -> "SessionConfig":
        return dataclasses.replace(self, **changes)


def _parse_value(kind, text: str):
    text = text.strip()
    if kind in ("Optional[float]",):
        return None if text.lower() in ("", "none") else float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "int":
        return int(text, 0)
    if kind == "float":
        return float(text)
    return text


def parse_config(text: str, base: SessionConfig | None = None) -> SessionConfig:
    """Parse ``key = value`` lines on top of ``base`` (defaults if omitted)."""
    types = {f.name: f.type for f in fields(SessionConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(types[key], value)
    return dataclasses.replace(base or SessionConfig(), **values)


def load_config(path, base: SessionConfig | None = None) -> SessionConfig:
    return parse_config(Path(path).read_text(), base)


def dump_config(config: SessionConfig) -> str:
    """Serialise every field; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
