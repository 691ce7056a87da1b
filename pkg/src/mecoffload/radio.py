"""Uplink radio model: channel gains, beam patterns, SINR and rate.

Two evaluation paths are kept on purpose.  `compute_sinr_and_rate` walks
the definition UE by UE and is the reference; `SlotLinks` precomputes the
pairwise coupling of one slot so that thousands of candidate associations
can be scored with array operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Deployment, ScenarioConfig

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelSnapshot:
    gain: np.ndarray  # (K, N) linear channel power gain
    shadowing_db: np.ndarray  # (K, N)
    distances: np.ndarray  # (K, N) m


@dataclass(frozen=True)
class LinkBudget:
    tx_power: np.ndarray  # (K,) W, 0 when idle
    tx_gain: np.ndarray  # (K,) linear
    rx_gain: np.ndarray  # (K,) linear
    interference: np.ndarray  # (K,) W
    sinr: np.ndarray  # (K,) linear
    rate: np.ndarray  # (K,) bit/s


def reference_gain(config: ScenarioConfig) -> float:
    """Free-space power gain at 1 m for the carrier frequency."""
    wavelength = SPEED_OF_LIGHT / config.carrier_freq
    return (wavelength / (4.0 * math.pi)) ** 2


def pathloss_gain(distance, config: ScenarioConfig):
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    return reference_gain(config) * d ** (-config.pathloss_exponent)


def draw_channels(deployment: Deployment, config: ScenarioConfig, rng: np.random.Generator) -> ChannelSnapshot:
    dist = deployment.distances()
    sigma = math.sqrt(config.shadowing_variance_db)
    if sigma > 0.0:
        shadow = rng.normal(0.0, sigma, size=dist.shape)
    else:
        shadow = np.zeros_like(dist)
    gain = pathloss_gain(dist, config) * 10.0 ** (shadow / 10.0)
    return ChannelSnapshot(gain=gain, shadowing_db=shadow, distances=dist)


def wrap_angle(x):
    return (np.asarray(x, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


def pattern_gain(offset, max_gain_db, beamwidth_deg, backlobe_db):
    """Parabolic main lobe with a flat back-lobe floor (linear gain)."""
    theta = np.abs(wrap_angle(offset))
    width = math.radians(beamwidth_deg)
    atten = np.minimum(12.0 * (theta / width) ** 2, -backlobe_db)
    return 10.0 ** ((max_gain_db - atten) / 10.0)


def antenna_gain(boresight_angle, target_angle, config: ScenarioConfig, side: str = "ue"):
    """Gain of a beam pointed at `boresight_angle`, seen from `target_angle`."""
    if side == "ue":
        g, bw = config.ue_gain_db, config.ue_beamwidth_deg
    elif side == "ap":
        g, bw = config.ap_gain_db, config.ap_beamwidth_deg
    else:
        raise ValueError(f"unknown antenna side {side!r}")
    return pattern_gain(np.asarray(target_angle) - np.asarray(boresight_angle), g, bw, config.backlobe_gain_db)


def peak_gains(config: ScenarioConfig) -> tuple[float, float]:
    return 10.0 ** (config.ue_gain_db / 10.0), 10.0 ** (config.ap_gain_db / 10.0)


def ue_to_ap_angles(deployment: Deployment) -> np.ndarray:
    d = deployment.ap_positions[None, :, :] - deployment.ue_positions[:, None, :]
    return np.arctan2(d[..., 1], d[..., 0])  # (K, N)


def ap_to_ue_angles(deployment: Deployment) -> np.ndarray:
    d = deployment.ue_positions[None, :, :] - deployment.ap_positions[:, None, :]
    return np.arctan2(d[..., 1], d[..., 0])  # (N, K)


def target_power(combined_gain, config: ScenarioConfig):
    """Transmit power that meets the target SNR, capped at p_max."""
    combined_gain = np.asarray(combined_gain, dtype=float)
    with np.errstate(divide="ignore"):
        p_tg = np.where(combined_gain > 0.0,
                        config.target_snr * config.noise_power / np.where(combined_gain > 0, combined_gain, 1.0),
                        np.inf)
    return np.minimum(p_tg, config.p_max)


def uplink_tx_power(k: int, n: int, snapshot: ChannelSnapshot, config: ScenarioConfig) -> float:
    g_tx, g_rx = peak_gains(config)
    return float(target_power(g_tx * snapshot.gain[k, n] * g_rx, config))


def rss_dbm(snapshot: ChannelSnapshot, config: ScenarioConfig) -> np.ndarray:
    """Received power at p_max with both beams aligned, per (UE, AP)."""
    g_tx, g_rx = peak_gains(config)
    return 10.0 * np.log10(config.p_max * g_tx * snapshot.gain * g_rx / 1e-3)


def shannon_rate(sinr, config: ScenarioConfig):
    return config.bandwidth * np.log2(1.0 + np.asarray(sinr, dtype=float))


def uplink_units(rate, config: ScenarioConfig):
    """Data units delivered in one slot at `rate` bit/s."""
    r = np.asarray(rate, dtype=float)
    if (r < 0).any():
        raise ValueError("rate must be non-negative")
    n = np.floor((1.0 - config.signaling_fraction) * config.slot_duration * r / config.bits_per_unit)
    n = n.astype(np.int64)
    return int(n) if n.ndim == 0 else n


def compute_sinr_and_rate(actions, snapshot: ChannelSnapshot, deployment: Deployment,
                          config: ScenarioConfig) -> LinkBudget:
    """Reference SINR evaluation. `actions[k]` is 0 for idle or the 1-based AP index."""
    actions = np.asarray(actions, dtype=int)
    K = len(actions)
    ue_ang = ue_to_ap_angles(deployment)
    ap_ang = ap_to_ue_angles(deployment)
    g_tx_peak, g_rx_peak = peak_gains(config)
    serving = actions - 1
    power = np.zeros(K)
    for k in range(K):
        if serving[k] >= 0:
            power[k] = uplink_tx_power(k, serving[k], snapshot, config)

    tx_gain = np.zeros(K)
    rx_gain = np.zeros(K)
    interference = np.zeros(K)
    sinr = np.zeros(K)
    for k in range(K):
        n = serving[k]
        if n < 0:
            continue
        tx_gain[k] = g_tx_peak
        rx_gain[k] = g_rx_peak
        signal = power[k] * g_tx_peak * snapshot.gain[k, n] * g_rx_peak
        total = 0.0
        for j in range(K):
            if j == k or serving[j] < 0:
                continue
            gt = float(antenna_gain(ue_ang[j, serving[j]], ue_ang[j, n], config, "ue"))
            gr = float(antenna_gain(ap_ang[n, k], ap_ang[n, j], config, "ap"))
            total += power[j] * gt * snapshot.gain[j, n] * gr
        interference[k] = total
        sinr[k] = signal / (total + config.noise_power)
    rate = shannon_rate(sinr, config)
    rate[serving < 0] = 0.0
    return LinkBudget(power, tx_gain, rx_gain, interference, sinr, rate)


class LinkGeometry:
    """Static beam-pattern couplings of one deployment."""

    def __init__(self, deployment: Deployment, config: ScenarioConfig):
        ue_ang = ue_to_ap_angles(deployment)  # (K, N)
        ap_ang = ap_to_ue_angles(deployment)  # (N, K)
        # tx[j, a, n]: UE j beam aimed at AP a, seen from AP n.
        self.tx = antenna_gain(ue_ang[:, :, None], ue_ang[:, None, :], config, "ue")
        # rx[n, k, j]: AP n beam aimed at UE k, seen from UE j.
        self.rx = antenna_gain(ap_ang[:, :, None], ap_ang[:, None, :], config, "ap")
        self.deployment = deployment
        self.aoa = ue_ang


class SlotLinks:
    """Per-slot link couplings for batched SINR evaluation."""

    def __init__(self, geometry: LinkGeometry, snapshot: ChannelSnapshot, config: ScenarioConfig):
        K, N = snapshot.gain.shape
        g_tx, g_rx = peak_gains(config)
        self.config = config
        self.power = target_power(g_tx * snapshot.gain * g_rx, config)  # (K, N)
        self.signal = self.power * g_tx * snapshot.gain * g_rx
        # coupling[k, a, j, b]: interference at UE k's link (served by AP a-1)
        # caused by UE j transmitting toward AP b-1; index 0 means idle.
        coupling = np.zeros((K, N + 1, K, N + 1))
        # p[j, b] * tx[j, b, n] * gain[j, n] * rx[n, k, j]  ->  [k, n, j, b]
        term = (self.power[:, :, None] * geometry.tx) * snapshot.gain[:, None, :]  # (j, b, n)
        term = term.transpose(2, 0, 1)[:, None, :, :] * geometry.rx[:, :, :, None]  # (n, k, j, b)
        coupling[:, 1:, :, 1:] = term.transpose(1, 0, 2, 3)
        idx = np.arange(K)
        coupling[idx, :, idx, :] = 0.0
        self.coupling = coupling
        self.n_ues = K

    def evaluate(self, actions: np.ndarray):
        """Rates and tx powers for a batch of action vectors, shape (C, K)."""
        actions = np.atleast_2d(actions)
        C, K = actions.shape
        rows = np.arange(K)
        serving = actions - 1
        active = serving >= 0
        sv = np.where(active, serving, 0)
        power = np.where(active, self.power[rows, sv], 0.0)
        signal = np.where(active, self.signal[rows, sv], 0.0)
        interference = np.zeros((C, K))
        for j in range(K):
            interference += self.coupling[rows[None, :], actions, j, actions[:, j:j + 1]]
        sinr = signal / (interference + self.config.noise_power)
        rate = np.where(active, shannon_rate(sinr, self.config), 0.0)
        return rate, power, sinr
