"""Per-slot energy of UEs, APs and the edge server, and the weighted objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllocationError, ConfigError, ContractError
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class EnergyReport:
    ue: float
    ap: float
    es: float
    weighted: float
    ue_active: np.ndarray
    ap_active: np.ndarray
    es_active: bool

    @property
    def total(self) -> float:
        return self.ue + self.ap + self.es


def ue_energy(active, tx_power, config: ScenarioConfig) -> float:
    active = np.asarray(active, dtype=bool)
    if tx_power is None:
        if active.any():
            raise ContractError("active UEs need a transmit power")
        tx_power = np.zeros(active.shape)
    tx_power = np.asarray(tx_power, dtype=float)
    if np.isnan(tx_power[active]).any():
        raise ContractError("active UE with missing transmit power")
    if (tx_power[~active] != 0).any():
        raise ContractError("idle UEs must have zero transmit power")
    b, tau = config.signaling_fraction, config.slot_duration
    per_ue = tau * ((1 - b) * np.where(active, config.p_ue_on + tx_power, config.p_ue_off) + b * config.p_ue_on)
    return float(per_ue.sum())


def ap_energy(active, config: ScenarioConfig) -> float:
    active = np.asarray(active, dtype=bool)
    b, tau = config.signaling_fraction, config.slot_duration
    per_ap = tau * ((1 - b) * np.where(active, config.p_ap_on, config.p_ap_off) + b * config.p_ap_on)
    return float(per_ap.sum())


def es_dynamic_power(core_freq, config: ScenarioConfig):
    return config.switched_capacitance * np.asarray(core_freq, dtype=float) ** 3


def es_energy(core_freq, config: ScenarioConfig) -> float:
    if float(core_freq) not in config.cpu_freqs:
        raise AllocationError(f"core frequency {core_freq} is not in the frequency set")
    b, tau = config.signaling_fraction, config.slot_duration
    if core_freq > 0:
        busy = config.p_es_on + float(es_dynamic_power(core_freq, config))
    else:
        busy = config.p_es_off
    return (1 - b) * tau * busy + b * tau * config.p_es_on


def weighted_energy(e_ue, e_ap, e_es, weights) -> float:
    a1, a2, a3 = weights
    if min(weights) < 0 or abs(a1 + a2 + a3 - 1.0) > 1e-12:
        raise ConfigError("energy weights must lie on the simplex", "energy_weights")
    return a1 * e_ue + a2 * e_ap + a3 * e_es


def energy_report(actions, tx_power, core_freq, config: ScenarioConfig) -> EnergyReport:
    actions = np.asarray(actions, dtype=int)
    ue_active = actions > 0
    ap_active = np.zeros(config.n_aps, dtype=bool)
    ap_active[actions[ue_active] - 1] = True
    tx = np.where(ue_active, tx_power, 0.0)
    eu = ue_energy(ue_active, tx, config)
    ea = ap_energy(ap_active, config)
    es = es_energy(core_freq, config)
    return EnergyReport(eu, ea, es, weighted_energy(eu, ea, es, config.energy_weights),
                        ue_active, ap_active, bool(core_freq > 0))
