"""Episode rollouts over random deployments and PPO training of the shared policy."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigError, TrainingDiverged
from ..scenario import ScenarioConfig, generate_deployment
from ..sim import Simulator, run
from .policy import LearnedSolver, ObsBatch, ObsNorm, PolicyNetwork
from .ppo import PPOConfig, PPOTrainer, Rollout

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 3000
    episode_len: int = 200
    hidden: int = 128
    seed: int = 0
    val_every: int = 100  # episodes
    val_deployments: int = 4
    val_slots: int = 1000
    val_delay_slack: float = 0.1  # relative tolerance on the delay target when picking checkpoints
    divergence_window: int = 50
    time_budget_s: float | None = None
    ppo: PPOConfig = field(default_factory=PPOConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        ppo_keys = {f.name for f in fields(PPOConfig)}
        own_keys = {f.name for f in fields(cls)} - {"ppo"}
        unknown = set(data) - ppo_keys - own_keys - {"ppo"}
        if unknown:
            raise ConfigError(f"unknown marl key(s): {', '.join(sorted(unknown))}", sorted(unknown)[0])
        ppo = dict(data.pop("ppo", {}))
        for k in list(data):
            if k in ppo_keys:
                ppo[k] = data.pop(k)
        return cls(ppo=PPOConfig(**ppo), **data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    policy: PolicyNetwork
    curve: list  # one dict per episode
    validations: list  # one dict per validation round
    best_score: tuple


def _rollout_from(buffer) -> Rollout:
    obs = ObsBatch.stack([b[0] for b in buffer])
    return Rollout(obs, np.stack([b[1] for b in buffer]), np.stack([b[2] for b in buffer]),
                   np.stack([b[3] for b in buffer]), np.array([b[4] for b in buffer], dtype=float))


def validation_score(summary: dict, delay_target: float, slack: float = 0.0) -> tuple:
    """Lexicographic: fewer failures, then meeting delay_target*(1+slack), then lower energy."""
    late = max(0.0, summary["delay"] - delay_target * (1.0 + slack))
    return (summary["failure_rate"], round(late, 3), summary["energy_w"])


def evaluate_policy(config: ScenarioConfig, policy: PolicyNetwork, slots: int, deployments: int, seed,
                    omega=None):
    return run(config, LearnedSolver(policy, "greedy"), slots, seed=seed, deployments=deployments, omega=omega)


def train(config: ScenarioConfig, tc: TrainConfig = TrainConfig(), policy: PolicyNetwork | None = None,
          progress=None) -> TrainResult:
    """Train on fresh random deployments with random CPU scheduling; keep the best validated policy."""
    master = np.random.SeedSequence(tc.seed)
    s_dep, s_sim, s_ppo, s_init, s_val = master.spawn(5)
    dep_seeds = s_dep.spawn(tc.episodes)
    sim_seeds = s_sim.spawn(tc.episodes)
    rng_ppo = np.random.default_rng(s_ppo)
    val_seed = int(s_val.generate_state(1)[0])
    if policy is None:
        policy = PolicyNetwork(config.n_aps, tc.hidden, seed=s_init)
    trainer = PPOTrainer(policy, tc.ppo)
    solver = LearnedSolver(policy, mode="sample", record=True, norm=ObsNorm.from_config(config))
    best = PolicyNetwork(config.n_aps, tc.hidden)
    best.copy_from(policy)
    best_score = (np.inf,)
    curve, validations = [], []
    fail_streak = 0
    start = time.monotonic()
    agent_steps = 0

    for ep in range(tc.episodes):
        deployment = generate_deployment(config, dep_seeds[ep])
        sim = Simulator(config, solver, deployment, sim_seeds[ep], cpu_policy="random", stop_on_failure=True)
        m = sim.run(tc.episode_len)
        curve.append({"episode": ep, "mean_reward": m.mean_reward, "failed": int(m.failed),
                      "mean_delay": m.delay, "mean_energy": m.energy_w, "slots": m.slots})
        fail_streak = fail_streak + 1 if m.failed else 0
        if fail_streak >= tc.divergence_window:
            raise TrainingDiverged(f"{fail_streak} consecutive failed episodes",
                                   {"episode": ep, "recent": curve[-tc.divergence_window:]})
        if len(solver.buffer) * config.n_ues >= tc.ppo.batch_size:
            stats = trainer.update(_rollout_from(solver.buffer), rng_ppo)
            agent_steps += len(solver.buffer) * config.n_ues
            solver.buffer.clear()
            if stats.get("aborted"):
                log.warning("non-finite PPO loss at episode %d; update skipped", ep)
        last = ep == tc.episodes - 1
        out_of_time = tc.time_budget_s is not None and time.monotonic() - start > tc.time_budget_s
        if (ep + 1) % tc.val_every == 0 or last or out_of_time:
            res = evaluate_policy(config, policy, tc.val_slots, tc.val_deployments, val_seed)
            summary = res.summary()
            score = validation_score(summary, config.delay_target, tc.val_delay_slack)
            validations.append({"episode": ep, "agent_steps": agent_steps, **summary})
            if score < best_score:
                best_score = score
                best.copy_from(policy)
            if progress is not None:
                progress(ep, summary, curve)
        if out_of_time:
            break
    return TrainResult(best, curve, validations, best_score)
