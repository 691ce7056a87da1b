"""Per-slot surrogate objectives of the drift-plus-penalty decomposition.

G1 only involves the CPU variables and G2 only the association, so each
can be minimised on its own every slot.  The bound constants that do not
depend on the decisions are never evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compute import check_allocation
from .energy import ap_energy, es_energy, ue_energy
from .queues import QueueSet
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class SlotContext:
    queues: QueueSet
    config: ScenarioConfig
    omega: float | None = None

    @property
    def weight(self) -> float:
        return self.config.omega if self.omega is None else self.omega


def eval_G1(ctx: SlotContext, core_freq, shares) -> float:
    cfg = ctx.config
    shares = np.asarray(shares, dtype=float)
    check_allocation(core_freq, shares, cfg)
    served = cfg.tau_objective * shares * cfg.units_per_cycle
    qs = ctx.queues.server.astype(float)
    z = ctx.queues.virtual
    queue_terms = -2.0 * qs * served + np.maximum(0.0, qs - served + 1.0) * z
    return ctx.weight * cfg.energy_weights[2] * es_energy(core_freq, cfg) + float(queue_terms.sum())


def eval_G2(ctx: SlotContext, actions, n_up, tx_power) -> float:
    """G2 for one association; `n_up` are the units that association delivers."""
    cfg = ctx.config
    actions = np.asarray(actions, dtype=int)
    n_up = np.asarray(n_up, dtype=float)
    ue_on = actions > 0
    ap_on = np.zeros(cfg.n_aps, dtype=bool)
    ap_on[actions[ue_on] - 1] = True
    a1, a2, _ = cfg.energy_weights
    energy = a1 * ue_energy(ue_on, np.where(ue_on, tx_power, 0.0), cfg) + a2 * ap_energy(ap_on, cfg)
    ql = ctx.queues.local.astype(float)
    qs = ctx.queues.server.astype(float)
    z = ctx.queues.virtual
    queue_terms = (-1.5 * ql + qs) * n_up + np.maximum(0.0, ql - n_up) * z
    return ctx.weight * energy + float(queue_terms.sum())


def eval_G2_batch(ctx: SlotContext, actions: np.ndarray, n_up: np.ndarray, tx_power: np.ndarray) -> np.ndarray:
    """Vectorised G2 over candidate rows (C, K)."""
    cfg = ctx.config
    b, tau = cfg.signaling_fraction, cfg.slot_duration
    on = actions > 0
    e_ue = tau * ((1 - b) * np.where(on, cfg.p_ue_on + tx_power, cfg.p_ue_off) + b * cfg.p_ue_on)
    ap_on = np.zeros((actions.shape[0], cfg.n_aps), dtype=bool)
    for n in range(cfg.n_aps):
        ap_on[:, n] = (actions == n + 1).any(axis=1)
    e_ap = tau * ((1 - b) * np.where(ap_on, cfg.p_ap_on, cfg.p_ap_off) + b * cfg.p_ap_on)
    a1, a2, _ = cfg.energy_weights
    energy = a1 * e_ue.sum(axis=1) + a2 * e_ap.sum(axis=1)
    ql = ctx.queues.local.astype(float)
    qs = ctx.queues.server.astype(float)
    z = ctx.queues.virtual
    n_up = n_up.astype(float)
    queue_terms = (-1.5 * ql + qs) * n_up + np.maximum(0.0, ql - n_up) * z
    return ctx.weight * energy + queue_terms.sum(axis=1)


def reward(ctx: SlotContext, g2: float, failed: bool = False, scaled: bool = True) -> float:
    """Common reward of all agents: -G2, scaled; failure slots are capped at the penalty."""
    cfg = ctx.config
    r = -g2 / cfg.reward_scale if scaled else -g2
    if failed:
        # At large Omega the scaled -G2 is already below the penalty; never let failing pay.
        return min(r, cfg.reward_fail)
    return r
