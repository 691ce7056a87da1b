"""Edge-server CPU model: frequency set, per-UE shares and processed units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllocationError
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class CpuAllocation:
    core_freq: float  # cycle/s, member of the frequency set
    shares: np.ndarray  # (K,) cycle/s

    def validate(self, config: ScenarioConfig) -> None:
        check_allocation(self.core_freq, self.shares, config)


def check_allocation(core_freq, shares, config: ScenarioConfig) -> None:
    if float(core_freq) not in config.cpu_freqs:
        raise AllocationError(f"core frequency {core_freq} is not in the frequency set")
    shares = np.asarray(shares, dtype=float)
    if (shares < 0).any():
        raise AllocationError("CPU shares must be non-negative")
    if shares.sum() > core_freq + 1e-9 * config.f_max:
        raise AllocationError("CPU shares exceed the core frequency")


def computed_units(share, config: ScenarioConfig):
    """Units the ES can process for a UE holding `share` cycle/s for one slot."""
    f = np.asarray(share, dtype=float)
    if (f < 0).any():
        raise AllocationError("CPU share must be non-negative")
    n = np.floor((1.0 - config.signaling_fraction) * config.slot_duration * f * config.units_per_cycle)
    n = n.astype(np.int64)
    return int(n) if n.ndim == 0 else n
