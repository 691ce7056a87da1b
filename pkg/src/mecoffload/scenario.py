"""Scenario configuration, random deployments and the arrival process."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

# Thermal noise of -174 dBm/Hz expressed in W/Hz.
THERMAL_NOISE_PSD = 10.0 ** (-174.0 / 10.0) * 1e-3

DEFAULT_CPU_FREQS = tuple(i * 1e8 for i in range(11))


@dataclass(frozen=True)
class ScenarioConfig:
    n_ues: int = 6
    n_aps: int = 3
    slot_duration: float = 0.01  # s
    signaling_fraction: float = 0.1
    bandwidth: float = 10e6  # Hz
    noise_psd: float = THERMAL_NOISE_PSD  # W/Hz
    bits_per_unit: float = 1500.0
    units_per_cycle: float = 1e-3
    cpu_freqs: tuple = DEFAULT_CPU_FREQS  # cycle/s, sorted, contains 0
    switched_capacitance: float = 1e-27
    p_ue_on: float = 0.9
    p_ue_off: float = 0.346
    p_ap_on: float = 2.2
    p_ap_off: float = 0.278
    p_es_on: float = 20.0
    p_es_off: float = 10.0
    p_max: float = 0.1
    target_snr_db: float = 15.0
    ap_capacity: int = 15
    arrival_mean: float = 50.0  # data units per slot per UE
    delay_target: float = 0.1  # s
    omega: float = 1e9
    energy_weights: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    cell_radius: float = 50.0  # m
    inter_cell_distance: float = 60.0  # m
    pathloss_exponent: float = 2.5
    shadowing_variance_db: float = 12.0  # dB^2 of the log-normal term
    backlobe_gain_db: float = -20.0
    rng_seed: int = 0
    # Extended knobs (optional in config files).
    carrier_freq: float = 28e9
    ue_gain_db: float = 8.0
    ue_beamwidth_deg: float = 60.0
    ap_gain_db: float = 15.0
    ap_beamwidth_deg: float = 30.0
    candidate_radius_factor: float = 1.5
    queue_clip_eps: float = 10.0
    virtual_clip_eps: float = 0.0
    consistent_tau: bool = False
    reward_scale: float = 1e6
    reward_fail: float = -10.0
    neighbor_radius: float | None = None  # None: every UE hears every UE

    def __post_init__(self):
        object.__setattr__(self, "cpu_freqs", tuple(float(f) for f in self.cpu_freqs))
        object.__setattr__(self, "energy_weights", tuple(float(a) for a in self.energy_weights))
        validate_config(self)

    @property
    def f_max(self) -> float:
        return self.cpu_freqs[-1]

    @property
    def noise_power(self) -> float:
        return self.noise_psd * self.bandwidth

    @property
    def target_snr(self) -> float:
        return 10.0 ** (self.target_snr_db / 10.0)

    @property
    def tau_objective(self) -> float:
        """Slot length used inside the per-slot objectives."""
        if self.consistent_tau:
            return (1.0 - self.signaling_fraction) * self.slot_duration
        return self.slot_duration

    @property
    def nominal_queue_bound(self) -> float:
        """Q_avg computed from the true arrival mean (used for fixed normalisations)."""
        return self.delay_target * self.arrival_mean / self.slot_duration

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cpu_freqs"] = list(self.cpu_freqs)
        d["energy_weights"] = list(self.energy_weights)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


REQUIRED_KEYS = (
    "n_ues", "n_aps", "slot_duration", "signaling_fraction", "bandwidth", "noise_psd",
    "bits_per_unit", "units_per_cycle", "cpu_freqs", "switched_capacitance",
    "p_ue_on", "p_ue_off", "p_ap_on", "p_ap_off", "p_es_on", "p_es_off", "p_max",
    "target_snr_db", "ap_capacity", "arrival_mean", "delay_target", "omega",
    "energy_weights", "cell_radius", "inter_cell_distance", "pathloss_exponent",
    "shadowing_variance_db", "backlobe_gain_db", "rng_seed",
)
CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(ScenarioConfig))


def validate_config(cfg: ScenarioConfig) -> None:
    if not 0.0 < cfg.signaling_fraction < 1.0:
        raise ConfigError("signaling_fraction must lie in (0, 1)", "signaling_fraction")
    if len(cfg.energy_weights) != 3 or min(cfg.energy_weights) < 0.0:
        raise ConfigError("energy_weights must be three non-negative weights", "energy_weights")
    if abs(sum(cfg.energy_weights) - 1.0) > 1e-12:
        raise ConfigError("energy_weights must sum to 1", "energy_weights")
    freqs = cfg.cpu_freqs
    if not freqs or 0.0 not in freqs or list(freqs) != sorted(freqs) or len(set(freqs)) != len(freqs):
        raise ConfigError("cpu_freqs must be strictly ascending and contain 0", "cpu_freqs")
    for key in ("slot_duration", "bandwidth", "bits_per_unit", "units_per_cycle",
                "p_ue_on", "p_ue_off", "p_ap_on", "p_ap_off", "p_es_on", "p_es_off",
                "p_max", "noise_psd", "delay_target", "cell_radius"):
        if not getattr(cfg, key) > 0.0:
            raise ConfigError(f"{key} must be strictly positive", key)
    if cfg.n_ues < 1 or cfg.n_aps < 1:
        raise ConfigError("need at least one UE and one AP", "n_ues" if cfg.n_ues < 1 else "n_aps")
    if cfg.ap_capacity < 1:
        raise ConfigError("ap_capacity must be >= 1", "ap_capacity")
    if cfg.arrival_mean < 0.0:
        raise ConfigError("arrival_mean must be non-negative", "arrival_mean")
    if cfg.switched_capacitance < 0.0 or cfg.omega < 0.0:
        raise ConfigError("switched_capacitance and omega must be non-negative")
    if cfg.shadowing_variance_db < 0.0:
        raise ConfigError("shadowing_variance_db must be non-negative", "shadowing_variance_db")


def config_from_dict(data: dict, require_all: bool = True) -> ScenarioConfig:
    """Build a config from a plain mapping; unknown keys are rejected."""
    unknown = sorted(set(data) - set(CONFIG_KEYS) - {"marl"})
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}", unknown[0])
    if require_all:
        for key in REQUIRED_KEYS:
            if key not in data:
                raise ConfigError(f"missing config key: {key}", key)
    kwargs = {k: v for k, v in data.items() if k != "marl"}
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> tuple[ScenarioConfig, dict]:
    """Read a JSON config file. Returns the scenario and the raw "marl" section."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", "config")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", "config") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object", "config")
    return config_from_dict(data), dict(data.get("marl", {}))


@dataclass(frozen=True)
class Deployment:
    ap_positions: np.ndarray  # (N, 2) m
    ue_positions: np.ndarray  # (K, 2) m
    candidate_sets: tuple  # per UE: tuple of 0-based AP indices

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    @property
    def n_aps(self) -> int:
        return len(self.ap_positions)

    def candidate_mask(self) -> np.ndarray:
        mask = np.zeros((self.n_ues, self.n_aps), dtype=bool)
        for k, aps in enumerate(self.candidate_sets):
            mask[k, list(aps)] = True
        return mask

    def distances(self) -> np.ndarray:
        diff = self.ue_positions[:, None, :] - self.ap_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def permuted(self, perm) -> "Deployment":
        perm = list(perm)
        return Deployment(self.ap_positions, self.ue_positions[perm],
                          tuple(self.candidate_sets[i] for i in perm))


def ap_layout(n_aps: int, spacing: float) -> np.ndarray:
    """Regular polygon with side `spacing` (equilateral triangle for three APs)."""
    if n_aps == 1:
        return np.zeros((1, 2))
    radius = spacing / (2.0 * math.sin(math.pi / n_aps))
    angles = math.pi / 2 + 2.0 * math.pi * np.arange(n_aps) / n_aps
    return np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def candidate_sets_for(ue_positions, ap_positions, max_distance) -> tuple:
    ue_positions = np.asarray(ue_positions, dtype=float)
    diff = ue_positions[:, None, :] - np.asarray(ap_positions)[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    sets = []
    for row in dist:
        near = tuple(int(n) for n in np.flatnonzero(row <= max_distance))
        sets.append(near if near else (int(np.argmin(row)),))
    return tuple(sets)


def deployment_from_positions(config: ScenarioConfig, ue_positions, ap_positions=None) -> Deployment:
    aps = ap_layout(config.n_aps, config.inter_cell_distance) if ap_positions is None else np.asarray(ap_positions, float)
    ues = np.asarray(ue_positions, dtype=float).reshape(-1, 2)
    sets = candidate_sets_for(ues, aps, config.candidate_radius_factor * config.cell_radius)
    return Deployment(aps, ues, sets)


def generate_deployment(config: ScenarioConfig, seed) -> Deployment:
    """APs on a regular layout, UEs uniform over the union of the coverage disks."""
    rng = np.random.default_rng(seed)
    aps = ap_layout(config.n_aps, config.inter_cell_distance)
    r0 = config.cell_radius
    lo = aps.min(axis=0) - r0
    hi = aps.max(axis=0) + r0
    ues = np.empty((config.n_ues, 2))
    filled = 0
    while filled < config.n_ues:
        pts = rng.uniform(lo, hi, size=(4 * config.n_ues, 2))
        d = np.hypot(*(pts[:, None, :] - aps[None, :, :]).transpose(2, 0, 1))
        inside = pts[(d <= r0).any(axis=1)]
        take = min(len(inside), config.n_ues - filled)
        ues[filled:filled + take] = inside[:take]
        filled += take
    sets = candidate_sets_for(ues, aps, config.candidate_radius_factor * r0)
    return Deployment(aps, ues, sets)


class ArrivalProcess:
    """Poisson data-unit arrivals with an online estimate of the mean rate."""

    kind = "poisson"

    def __init__(self, mean, n_ues: int, slot_duration: float):
        mean = np.broadcast_to(np.asarray(mean, dtype=float), (n_ues,)).copy()
        if (mean < 0).any():
            raise ConfigError("arrival mean must be non-negative", "arrival_mean")
        self.mean = mean
        self.slot_duration = slot_duration
        self.total_units = np.zeros(n_ues)
        self.n_slots = 0

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "ArrivalProcess":
        return cls(config.arrival_mean, config.n_ues, config.slot_duration)

    @property
    def rate_estimate(self) -> np.ndarray:
        """Running estimate of the mean arrival rate D̄_k in units/s."""
        if self.n_slots == 0:
            return np.zeros_like(self.mean)
        return self.total_units / (self.n_slots * self.slot_duration)

    def copy(self) -> "ArrivalProcess":
        other = ArrivalProcess(self.mean, len(self.mean), self.slot_duration)
        other.total_units = self.total_units.copy()
        other.n_slots = self.n_slots
        return other


def sample_arrivals(proc: ArrivalProcess, rng: np.random.Generator) -> np.ndarray:
    draws = rng.poisson(proc.mean).astype(np.int64)
    proc.total_units += draws
    proc.n_slots += 1
    return draws


def delay_to_queue_bound(delay_target, rate):
    """Little's law: the queue backlog that corresponds to a mean delay."""
    delay_target = np.asarray(delay_target, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if (delay_target <= 0).any() or (rate <= 0).any():
        raise ConfigError("delay target and arrival rate must be positive")
    out = delay_target * rate
    return float(out) if out.ndim == 0 else out


def seed_streams(seed, names: Sequence[str]) -> dict:
    """Independent generators, one per named component."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}
