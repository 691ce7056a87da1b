"""Per-slot CPU scheduling (P1): exact greedy solver and a brute-force oracle.

For a fixed core frequency f_c the queue part of G1 is a sum of convex
piecewise-linear functions of the shares f_k:

    slope -(2 Q^s_k + Z_k) tau J   for 0 <= f_k <= (Q^s_k + 1) / (tau J)
    slope -2 Q^s_k tau J           beyond that breakpoint

so filling the budget along the steepest remaining slope is optimal.  The
greedy order does not depend on the budget, which lets a single pass over
the ascending frequency set produce every inner optimum.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .energy import es_energy
from .objectives import SlotContext, eval_G1
from .queues import QueueSet
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class ScheduleResult:
    core_freq: float
    shares: np.ndarray
    objective: float
    iterations: int


def _segments(queues: QueueSet, config: ScenarioConfig):
    c = config.tau_objective * config.units_per_cycle
    segs = []  # (slope, ue, order, length)
    for k, (qs, z) in enumerate(zip(queues.server.astype(float), queues.virtual)):
        first = -(2.0 * qs + z) * c
        second = -2.0 * qs * c
        if z > 0.0:
            segs.append((first, k, 0, (qs + 1.0) / c))
            if second < 0.0:
                segs.append((second, k, 1, np.inf))
        elif second < 0.0:
            segs.append((second, k, 1, np.inf))
    segs.sort(key=lambda s: (s[0], s[1], s[2]))
    return segs


def solve_p1(queues: QueueSet, config: ScenarioConfig, omega=None, alpha3=None) -> ScheduleResult:
    omega = config.omega if omega is None else omega
    alpha3 = config.energy_weights[2] if alpha3 is None else alpha3
    K = len(queues.server)
    segs = _segments(queues, config)
    constant = float(((queues.server + 1.0) * queues.virtual).sum())

    shares = np.zeros(K)
    used = 0.0
    slope_sum = 0.0  # sum of slope * allocated over the filled prefix
    pos = 0  # current segment
    in_seg = 0.0  # amount already placed in the current segment
    iterations = 0

    best_val = omega * alpha3 * es_energy(0.0, config) + constant
    best_f, best_shares = 0.0, shares.copy()
    for f_c in config.cpu_freqs[1:]:
        iterations += 1
        budget = f_c - used
        while budget > 0.0 and pos < len(segs):
            slope, k, _, length = segs[pos]
            take = min(budget, length - in_seg)
            shares[k] += take
            slope_sum += slope * take
            in_seg += take
            budget -= take
            used += take
            if in_seg >= length:
                pos += 1
                in_seg = 0.0
                iterations += 1
        val = omega * alpha3 * es_energy(f_c, config) + constant + slope_sum
        if val < best_val:
            best_val, best_f, best_shares = val, f_c, shares.copy()

    ctx = SlotContext(queues, config, omega)
    objective = eval_G1_weighted(ctx, best_f, best_shares, alpha3)
    return ScheduleResult(best_f, best_shares, objective, iterations)


def eval_G1_weighted(ctx: SlotContext, core_freq, shares, alpha3) -> float:
    """G1 with an explicit energy weight (defaults to the configured alpha_3)."""
    base = eval_G1(ctx, core_freq, shares)
    cfg = ctx.config
    if alpha3 == cfg.energy_weights[2]:
        return base
    return base + ctx.weight * (alpha3 - cfg.energy_weights[2]) * es_energy(core_freq, cfg)


def _candidate_allocations(f_c, breakpoints, grid_points):
    """Polytope vertices split at the breakpoints, plus a uniform simplex grid."""
    K = len(breakpoints)
    pts = []
    for choice in itertools.product(range(3), repeat=K):
        if sum(1 for c in choice if c == 2) > 1:
            continue
        alloc = np.array([0.0 if c == 0 else min(breakpoints[k], f_c) for k, c in enumerate(choice)])
        rest = [k for k, c in enumerate(choice) if c == 2]
        fixed = alloc.sum() - (alloc[rest[0]] if rest else 0.0)
        if fixed > f_c:
            continue
        if rest:
            alloc[rest[0]] = f_c - fixed
        pts.append(alloc)
    if grid_points > 0 and f_c > 0:
        for comp in itertools.product(range(grid_points + 1), repeat=K):
            if sum(comp) <= grid_points:
                pts.append(np.array(comp, dtype=float) * f_c / grid_points)
    return np.array(pts)


def brute_force_p1(queues: QueueSet, config: ScenarioConfig, omega=None, alpha3=None,
                   grid_points: int = 8) -> ScheduleResult:
    """Exhaustive oracle over the frequency set and candidate share vectors."""
    omega = config.omega if omega is None else omega
    alpha3 = config.energy_weights[2] if alpha3 is None else alpha3
    c = config.tau_objective * config.units_per_cycle
    qs = queues.server.astype(float)
    z = queues.virtual
    bps = (qs + 1.0) / c
    best = None
    count = 0
    for f_c in config.cpu_freqs:
        cand = _candidate_allocations(f_c, bps, grid_points) if f_c > 0 else np.zeros((1, len(qs)))
        cand = cand[cand.sum(axis=1) <= f_c * (1 + 1e-15)]
        served = c * cand
        vals = (-2.0 * qs * served + np.maximum(0.0, qs - served + 1.0) * z).sum(axis=1)
        vals = vals + omega * alpha3 * es_energy(f_c, config)
        i = int(np.argmin(vals))
        count += len(cand)
        if best is None or vals[i] < best[0]:
            best = (vals[i], f_c, cand[i].copy())
    _, f_best, shares = best
    if shares.sum() > f_best:  # rounding from the grid; keep the share budget exact
        shares *= f_best / shares.sum()
    ctx = SlotContext(queues, config, omega)
    return ScheduleResult(f_best, shares, eval_G1_weighted(ctx, f_best, shares, alpha3), count)


def random_schedule(n_ues: int, config: ScenarioConfig, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Uniform core frequency with symmetric-Dirichlet shares (training-time CPU policy)."""
    f_c = float(config.cpu_freqs[rng.integers(len(config.cpu_freqs))])
    w = rng.dirichlet(np.ones(n_ues))
    shares = w * f_c
    total = shares.sum()
    if total > f_c:
        shares *= f_c / total
    return f_c, shares
