"""Non-learned UE-AP association: exhaustive P2 search and the Max-SNR heuristic."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import AssociationError, InfeasibleError, SearchSpaceError
from .objectives import SlotContext, eval_G2_batch
from .radio import ChannelSnapshot, SlotLinks, rss_dbm, uplink_units
from .scenario import Deployment, ScenarioConfig


@dataclass(frozen=True)
class AssociationMatrix:
    """Actions a_k in {0 (idle), 1..N}; the binary matrix x is derived."""

    actions: np.ndarray
    n_aps: int

    @property
    def x(self) -> np.ndarray:
        x = np.zeros((len(self.actions), self.n_aps), dtype=np.int8)
        on = self.actions > 0
        x[np.flatnonzero(on), self.actions[on] - 1] = 1
        return x

    @classmethod
    def from_matrix(cls, x) -> "AssociationMatrix":
        x = np.asarray(x)
        if ((x != 0) & (x != 1)).any() or (x.sum(axis=1) > 1).any():
            raise AssociationError("x must be binary with at most one AP per UE")
        actions = np.where(x.any(axis=1), x.argmax(axis=1) + 1, 0)
        return cls(actions.astype(int), x.shape[1])


def check_association(actions, deployment: Deployment, config: ScenarioConfig) -> None:
    actions = np.asarray(actions, dtype=int)
    if ((actions < 0) | (actions > deployment.n_aps)).any():
        raise AssociationError("action out of range")
    for k, a in enumerate(actions):
        if a > 0 and (a - 1) not in deployment.candidate_sets[k]:
            raise AssociationError(f"UE {k} requested AP {a - 1} outside its candidate set")
    counts = np.bincount(actions[actions > 0] - 1, minlength=deployment.n_aps)
    if (counts > config.ap_capacity).any():
        raise AssociationError("AP capacity exceeded")


def enumerate_candidates(deployment: Deployment, config: ScenarioConfig, guard_bits: float = 24.0) -> np.ndarray:
    """All action vectors within AP capacity in lexicographic order."""
    K, N = deployment.n_ues, deployment.n_aps
    if K * math.log2(N + 1) > guard_bits:
        raise SearchSpaceError(f"(N+1)^K = {(N + 1) ** K} candidates exceed the guard 2^{guard_bits:g}")
    options = [[0] + [n + 1 for n in sorted(aps)] for aps in deployment.candidate_sets]
    cand = np.array(list(itertools.product(*options)), dtype=np.int64).reshape(-1, K)
    if config.ap_capacity < K:
        counts = np.stack([(cand == n + 1).sum(axis=1) for n in range(N)], axis=1)
        cand = cand[(counts <= config.ap_capacity).all(axis=1)]
    return cand


@dataclass(frozen=True)
class P2Result:
    association: AssociationMatrix
    value: float
    n_candidates: int


def exhaustive_p2(ctx: SlotContext, links: SlotLinks, candidates: np.ndarray) -> P2Result:
    """Score every candidate association with a full SINR recomputation."""
    rate, power, _ = links.evaluate(candidates)
    n_up = uplink_units(rate, ctx.config)
    values = eval_G2_batch(ctx, candidates, n_up, power)
    best = int(np.argmin(values))  # first minimum == lexicographically smallest
    return P2Result(AssociationMatrix(candidates[best].copy(), ctx.config.n_aps), float(values[best]), len(candidates))


def arbitrate_requests(requests, rss: np.ndarray, config: ScenarioConfig):
    """Admit up to N_n requesters per AP, strongest received signal first."""
    requests = np.asarray(requests, dtype=int)
    K = len(requests)
    actions = np.zeros(K, dtype=int)
    ack = np.zeros(K, dtype=bool)
    for n in range(rss.shape[1]):
        who = np.flatnonzero(requests == n + 1)
        if len(who) == 0:
            continue
        order = who[np.lexsort((who, -rss[who, n]))]
        admitted = order[:config.ap_capacity]
        actions[admitted] = n + 1
        ack[admitted] = True
    return AssociationMatrix(actions, rss.shape[1]), ack


def best_snr_ap(snapshot: ChannelSnapshot, deployment: Deployment) -> np.ndarray:
    """1-based index of the strongest candidate AP of every UE."""
    mask = deployment.candidate_mask()
    g = np.where(mask, snapshot.gain, -np.inf)
    return g.argmax(axis=1) + 1


def max_snr_heuristic(p_duty: float, snapshot: ChannelSnapshot, deployment: Deployment,
                      config: ScenarioConfig, rng: np.random.Generator) -> AssociationMatrix:
    if not 0.0 <= p_duty <= 1.0:
        raise ValueError("duty cycle must lie in [0, 1]")
    active = rng.random(deployment.n_ues) < p_duty
    requests = np.where(active, best_snr_ap(snapshot, deployment), 0)
    assoc, _ = arbitrate_requests(requests, rss_dbm(snapshot, config), config)
    return assoc


DUTY_GRID = tuple(round(0.05 * i, 2) for i in range(1, 21))


def calibrate_duty_cycle(config: ScenarioConfig, target_delay: float, slots: int = 5000,
                         deployments: int = 4, seed: int = 0, grid=DUTY_GRID, probe=None):
    """Smallest Max-SNR duty cycle whose long-run delay meets `target_delay`.

    Scans the 0.05 grid upward, then bisects on a 0.01 lattice inside the
    first passing cell.  All probes share the same seed.  Returns
    (p_star, probes) where probes maps p -> measured delay.
    """
    if slots < 5000:
        raise ValueError("each calibration probe needs at least 5000 slots")
    if probe is None:
        from .sim import MaxSnrSolver, run

        def probe(p):
            res = run(config, MaxSnrSolver(p), slots, seed=seed, deployments=deployments)
            return res.mean("delay")

    probes = {}

    def meets(p):
        if math.isinf(target_delay):
            return True
        if p not in probes:
            probes[p] = probe(p)
        return probes[p] <= target_delay

    prev = None
    for p in grid:
        if meets(p):
            break
        prev = p
    else:
        raise InfeasibleError(f"even p={grid[-1]} misses the delay target {target_delay}")
    if prev is None:
        return p, probes
    lo, hi = int(round(prev * 100)), int(round(p * 100))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if meets(mid / 100):
            hi = mid
        else:
            lo = mid
    return hi / 100, probes
