"""Energy allocation for delay-constrained traffic over fading multiple-access channels."""

from .fading import Deterministic, Exponential, FadingDistribution, TabulatedInverseCdf
from .model import (
    AllocationMatrix,
    CausalPolicy,
    ChannelRealization,
    EnergyState,
    SystemParams,
    advance_energy,
    realized_throughput,
    run_episode,
    sum_throughput,
)

__version__ = "0.1.0"
