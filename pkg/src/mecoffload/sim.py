"""Slotted closed-loop simulation: associate, schedule, transmit, compute, account."""

from __future__ import annotations

import copy
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .association import (arbitrate_requests, best_snr_ap, enumerate_candidates,
                          exhaustive_p2)
from .compute import computed_units
from .energy import EnergyReport, energy_report
from .objectives import SlotContext, eval_G2_batch, reward
from .queues import QueueSet, check_failure
from .radio import ChannelSnapshot, LinkGeometry, SlotLinks, draw_channels, rss_dbm, uplink_units
from .scenario import (ArrivalProcess, Deployment, ScenarioConfig, generate_deployment,
                       sample_arrivals)
from .scheduler import random_schedule, solve_p1

STREAMS = ("channels", "arrivals", "solver", "cpu")


@dataclass
class SlotView:
    """What a P2 solver may look at when deciding slot t."""

    t: int
    config: ScenarioConfig
    omega: float
    deployment: Deployment
    geometry: LinkGeometry
    snapshot: ChannelSnapshot
    links: SlotLinks
    rss: np.ndarray
    queues: QueueSet
    prev_actions: np.ndarray
    prev_rates: np.ndarray
    prev_ack: np.ndarray
    prev_shares: np.ndarray
    rng: np.random.Generator

    @property
    def ctx(self) -> SlotContext:
        return SlotContext(self.queues, self.config, self.omega)


@dataclass
class SlotOutcome:
    t: int
    actions: np.ndarray
    ack: np.ndarray
    rates: np.ndarray
    tx_power: np.ndarray
    n_up: np.ndarray
    n_comp: np.ndarray
    core_freq: float
    shares: np.ndarray
    arrivals: np.ndarray
    energy: EnergyReport
    g2: float
    reward: float
    failed: bool
    queues_before: QueueSet
    queues_after: QueueSet


class P2Solver:
    """Base interface: return the requested action vector for one slot."""

    name = "base"

    def reset(self, deployment: Deployment, config: ScenarioConfig) -> None:
        pass

    def decide(self, view: SlotView) -> np.ndarray:
        raise NotImplementedError

    def observe(self, outcome: SlotOutcome) -> None:
        pass


class ExhaustiveSolver(P2Solver):
    name = "exhaustive"

    def __init__(self, guard_bits: float = 24.0):
        self.guard_bits = guard_bits
        self._candidates = None

    def reset(self, deployment, config):
        self._candidates = enumerate_candidates(deployment, config, self.guard_bits)

    def decide(self, view):
        if self._candidates is None:
            self.reset(view.deployment, view.config)
        return exhaustive_p2(view.ctx, view.links, self._candidates).association.actions


class MaxSnrSolver(P2Solver):
    name = "max-snr"

    def __init__(self, p_duty: float):
        if not 0.0 <= p_duty <= 1.0:
            raise ValueError("duty cycle must lie in [0, 1]")
        self.p_duty = p_duty

    def decide(self, view):
        active = view.rng.random(view.deployment.n_ues) < self.p_duty
        return np.where(active, best_snr_ap(view.snapshot, view.deployment), 0)


class IdleSolver(P2Solver):
    name = "idle"

    def decide(self, view):
        return np.zeros(view.deployment.n_ues, dtype=int)


class UnitTracker:
    """FIFO cohorts of (arrival slot, count) to measure per-unit sojourn times."""

    def __init__(self, n_ues: int):
        self.local = [deque() for _ in range(n_ues)]
        self.server = [deque() for _ in range(n_ues)]
        self.delay_slot_sum = np.zeros(n_ues)
        self.departed = np.zeros(n_ues, dtype=np.int64)

    @staticmethod
    def _pop(fifo: deque, count: int):
        out = []
        while count > 0 and fifo:
            stamp, n = fifo[0]
            take = min(n, count)
            out.append((stamp, take))
            count -= take
            if take == n:
                fifo.popleft()
            else:
                fifo[0] = (stamp, n - take)
        return out

    def step(self, t, n_up, n_comp, arrivals):
        for k in range(len(self.local)):
            for stamp, n in self._pop(self.server[k], int(n_comp[k])):
                self.delay_slot_sum[k] += n * (t - stamp)
                self.departed[k] += n
            for cohort in self._pop(self.local[k], int(n_up[k])):
                self.server[k].append(cohort)
            if arrivals[k] > 0:
                self.local[k].append((t, int(arrivals[k])))

    def mean_delay_slots(self) -> np.ndarray:
        return np.where(self.departed > 0, self.delay_slot_sum / np.maximum(self.departed, 1), 0.0)


@dataclass
class RunMetrics:
    slots: int
    energy_w: float  # J per slot
    energy_ue: float
    energy_ap: float
    energy_es: float
    energy_total: float
    delay: float  # s, mean over UEs of avg backlog / arrival rate
    delay_max: float  # s, worst UE
    violation_rate: float  # fraction of slots above a clip value
    failed: bool
    first_failure: int  # -1 if never
    z_over_t: np.ndarray  # per UE Z(T)/T
    q_avg: np.ndarray  # per UE final backlog target
    mean_reward: float = 0.0
    unit_delay: float | None = None  # s, from per-unit timestamps

    SCALARS = ("energy_w", "energy_ue", "energy_ap", "energy_es", "energy_total", "delay",
               "delay_max", "violation_rate", "failed", "mean_reward", "z_ratio_max")

    @property
    def z_ratio_max(self) -> float:
        """max_k Z_k(T)/T relative to Q_avg,k."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.q_avg > 0, self.z_over_t / self.q_avg, 0.0)
        return float(r.max()) if r.size else 0.0

    def as_row(self) -> dict:
        row = {name: float(getattr(self, name)) for name in self.SCALARS}
        row["slots"] = self.slots
        row["first_failure"] = self.first_failure
        return row


class Simulator:
    def __init__(self, config: ScenarioConfig, solver: P2Solver, deployment: Deployment, seed,
                 omega=None, cpu_policy: str = "p1", stop_on_failure: bool = False,
                 track_units: bool = False, record: bool = False, record_channels: bool = False):
        if cpu_policy not in ("p1", "random"):
            raise ValueError("cpu_policy must be 'p1' or 'random'")
        self.config = config
        self.solver = solver
        self.deployment = deployment
        self.omega = config.omega if omega is None else omega
        self.cpu_policy = cpu_policy
        self.stop_on_failure = stop_on_failure
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.streams = dict(zip(STREAMS, (np.random.default_rng(s) for s in ss.spawn(len(STREAMS)))))
        self.geometry = LinkGeometry(deployment, config)
        K = deployment.n_ues
        self.arrivals = ArrivalProcess(config.arrival_mean, K, config.slot_duration)
        self.queues = QueueSet.empty(K, 0.0, config.queue_clip_eps, config.virtual_clip_eps)
        self.t = 0
        self.prev_actions = np.zeros(K, dtype=int)
        self.prev_rates = np.zeros(K)
        self.prev_ack = np.zeros(K, dtype=bool)
        self.prev_shares = np.zeros(K)
        self.failed = False
        self.first_failure = -1
        self.done = False
        self.tracker = UnitTracker(K) if track_units else None
        self.record = record
        self.record_channels = record_channels
        self.traces = {"queues": [], "energy": [], "associations": [], "channels": []}
        self._acc = dict(ue=0.0, ap=0.0, es=0.0, w=0.0, reward=0.0, violations=0)
        self._backlog = np.zeros(K)
        solver.reset(deployment, config)

    def _schedule(self):
        if self.cpu_policy == "p1":
            res = solve_p1(self.queues, self.config, self.omega)
            return res.core_freq, res.shares
        return random_schedule(self.deployment.n_ues, self.config, self.streams["cpu"])

    def step(self) -> SlotOutcome:
        cfg = self.config
        snapshot = draw_channels(self.deployment, cfg, self.streams["channels"])
        links = SlotLinks(self.geometry, snapshot, cfg)
        arrivals = sample_arrivals(self.arrivals, self.streams["arrivals"])
        rss = rss_dbm(snapshot, cfg)
        view = SlotView(self.t, cfg, self.omega, self.deployment, self.geometry, snapshot, links, rss,
                        self.queues, self.prev_actions, self.prev_rates, self.prev_ack,
                        self.prev_shares, self.streams["solver"])
        # P1 and P2 both read the same queue snapshot; their order is irrelevant.
        requests = self.solver.decide(view)
        assoc, ack = arbitrate_requests(requests, rss, cfg)
        core_freq, shares = self._schedule()

        actions = assoc.actions
        rate, power, sinr = links.evaluate(actions[None, :])
        rate, power, sinr = rate[0], power[0], sinr[0]
        n_up = uplink_units(rate, cfg)
        n_comp = computed_units(shares, cfg)
        ctx = SlotContext(self.queues, cfg, self.omega)
        g2 = float(eval_G2_batch(ctx, actions[None, :], n_up[None, :], power[None, :])[0])
        energy = energy_report(actions, power, core_freq, cfg)

        est = self.arrivals.rate_estimate
        q_avg_next = np.where(est > 0, cfg.delay_target * est, 0.0)
        before = self.queues
        after = before.advance(n_up, n_comp, arrivals, q_avg_next)
        failed = check_failure(after)
        r = reward(ctx, g2, failed)

        if self.tracker is not None:
            self.tracker.step(self.t, n_up, n_comp, arrivals)
        out = SlotOutcome(self.t, actions, ack, rate, power, n_up, n_comp, core_freq, shares,
                          arrivals, energy, g2, r, failed, before, after)
        self.solver.observe(out)
        if self.record:
            self._record(out, snapshot, sinr)

        self._acc["ue"] += energy.ue
        self._acc["ap"] += energy.ap
        self._acc["es"] += energy.es
        self._acc["w"] += energy.weighted
        self._acc["reward"] += r
        self._acc["violations"] += int(failed)
        self._backlog += after.total
        if failed and not self.failed:
            self.failed = True
            self.first_failure = self.t
        if failed and self.stop_on_failure:
            self.done = True

        self.queues = after
        self.prev_actions = actions
        self.prev_rates = rate
        self.prev_ack = ack
        self.prev_shares = shares
        self.t += 1
        return out

    def _record(self, out: SlotOutcome, snapshot, sinr):
        t = out.t
        q = out.queues_after
        for k in range(len(out.actions)):
            self.traces["queues"].append((t, k, int(q.local[k]), int(q.server[k]), float(q.virtual[k])))
            self.traces["associations"].append((t, k, int(out.actions[k]), int(out.ack[k]),
                                                float(out.rates[k]), int(out.n_up[k]), int(out.n_comp[k])))
        e = out.energy
        self.traces["energy"].append((t, e.ue, e.ap, e.es, e.weighted))
        if self.record_channels:
            for k in range(snapshot.gain.shape[0]):
                for n in range(snapshot.gain.shape[1]):
                    served = out.actions[k] == n + 1
                    self.traces["channels"].append((t, k, n, float(snapshot.gain[k, n]),
                                                    float(sinr[k]) if served else 0.0,
                                                    float(out.rates[k]) if served else 0.0))

    def run(self, slots: int) -> RunMetrics:
        if slots < 1:
            raise ValueError("need at least one slot")
        for _ in range(slots):
            self.step()
            if self.done:
                break
        return self.metrics()

    def metrics(self) -> RunMetrics:
        T = max(self.t, 1)
        est = self.arrivals.rate_estimate
        avg_backlog = self._backlog / T
        per_ue_delay = np.where(est > 0, avg_backlog / np.where(est > 0, est, 1.0), 0.0)
        unit_delay = None
        if self.tracker is not None:
            unit_delay = float(self.tracker.mean_delay_slots().mean() * self.config.slot_duration)
        return RunMetrics(
            slots=self.t,
            energy_w=self._acc["w"] / T, energy_ue=self._acc["ue"] / T, energy_ap=self._acc["ap"] / T,
            energy_es=self._acc["es"] / T,
            energy_total=(self._acc["ue"] + self._acc["ap"] + self._acc["es"]) / T,
            delay=float(per_ue_delay.mean()), delay_max=float(per_ue_delay.max()),
            violation_rate=self._acc["violations"] / T, failed=self.failed,
            first_failure=self.first_failure, z_over_t=self.queues.virtual / T,
            q_avg=self.queues.q_avg.copy(), mean_reward=self._acc["reward"] / T,
            unit_delay=unit_delay)


@dataclass
class RunResult:
    per_deployment: list
    seed: int

    def values(self, name: str) -> np.ndarray:
        return np.array([float(getattr(m, name)) for m in self.per_deployment])

    def mean(self, name: str) -> float:
        return float(self.values(name).mean())

    def stderr(self, name: str) -> float:
        v = self.values(name)
        return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0

    def summary(self) -> dict:
        out = {"deployments": len(self.per_deployment), "seed": self.seed}
        for name in RunMetrics.SCALARS:
            out[name] = self.mean(name)
            out[name + "_stderr"] = self.stderr(name)
        out["failure_rate"] = self.mean("failed")
        return out


def deployment_seeds(seed, deployments: int):
    """(deployment seed, simulator seed) pairs, independent across deployments."""
    out = []
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in ss.spawn(deployments):
        dep, sim = child.spawn(2)
        out.append((dep, sim))
    return out


def _run_one(args):
    config, solver, slots, dep_seed, sim_seed, omega, kwargs = args
    deployment = generate_deployment(config, dep_seed)
    sim = Simulator(config, copy.deepcopy(solver), deployment, sim_seed, omega=omega, **kwargs)
    return sim.run(slots)


def run(config: ScenarioConfig, solver: P2Solver, slots: int, seed: int = 0, deployments: int = 1,
        omega=None, jobs: int = 1, **sim_kwargs) -> RunResult:
    """Average a solver over `deployments` random deployments of `slots` slots each."""
    tasks = [(config, solver, slots, d, s, omega, sim_kwargs) for d, s in deployment_seeds(seed, deployments)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            metrics = list(ex.map(_run_one, tasks))
    else:
        metrics = [_run_one(t) for t in tasks]
    return RunResult(metrics, seed)


def sweep_omega(config: ScenarioConfig, omegas, solver: P2Solver, slots: int, seed: int = 0,
                deployments: int = 1, jobs: int = 1) -> list[dict]:
    """One summary row per Omega, sorted by Omega."""
    if len(omegas) == 0:
        raise ValueError("omega list is empty")
    rows = []
    for omega in sorted(float(o) for o in omegas):
        res = run(config, solver, slots, seed=seed, deployments=deployments, omega=omega, jobs=jobs)
        rows.append({"omega": omega, **res.summary()})
    return rows
