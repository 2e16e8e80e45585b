"""Simulation and post-processing toolkit for Gaussian-modulated coherent-state
QKD with reverse reconciliation.

All variances are expressed in shot-noise units: a vacuum quadrature
measurement has variance 1.0.
"""

from cvqkd.core import (
    ChannelParams,
    DetectorParams,
    PulseBatch,
    PulseState,
    Symbol,
    distance_from_gain,
    gain_from_distance,
    total_added_noise,
)
from cvqkd.config import SessionConfig, load_config, dump_config
from cvqkd.rates import RateReport, i_ab, i_be_max, delta_i, delta_i_eff, rate_report
from cvqkd.estimation import ChannelEstimator, ChannelEstimate
from cvqkd.reconciliation import SliceQuantizer, reconcile_block
from cvqkd.session import run_session, SessionOutcome

__all__ = [
    "ChannelParams",
    "DetectorParams",
    "PulseBatch",
    "PulseState",
    "Symbol",
    "distance_from_gain",
    "gain_from_distance",
    "total_added_noise",
    "SessionConfig",
    "load_config",
    "dump_config",
    "RateReport",
    "i_ab",
    "i_be_max",
    "delta_i",
    "delta_i_eff",
    "rate_report",
    "ChannelEstimator",
    "ChannelEstimate",
    "SliceQuantizer",
    "reconcile_block",
    "run_session",
    "SessionOutcome",
]

__version__ = "0.1.0"
