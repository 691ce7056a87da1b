"""Clipped-surrogate PPO with a myopic (gamma = 0) advantage."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn import Adam, RunningMoments
from .policy import ObsBatch, PolicyNetwork


@dataclass(frozen=True)
class PPOConfig:
    lr: float = 1e-4
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    epochs: int = 4
    batch_size: int = 2048  # agent-steps per update
    minibatch_size: int = 256  # agent-steps per gradient step
    normalize_advantage: bool = True
    max_grad_norm: float = 0.5

    def to_dict(self):
        return asdict(self)


@dataclass
class Rollout:
    obs: ObsBatch  # leading (S, K)
    actions: np.ndarray  # (S, K)
    logp_old: np.ndarray  # (S, K)
    values_old: np.ndarray  # (S, K)
    rewards: np.ndarray  # (S,) common to the K agents of a slot

    @property
    def n_slots(self) -> int:
        return len(self.rewards)

    def take(self, idx) -> "Rollout":
        return Rollout(self.obs.take(idx), self.actions[idx], self.logp_old[idx], self.values_old[idx], self.rewards[idx])


def advantages(rewards, values_old, normalize: bool = True) -> np.ndarray:
    """A = r - V(c_k); with gamma = 0 there is nothing to bootstrap."""
    adv = np.broadcast_to(rewards[:, None], values_old.shape) - values_old
    if normalize and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def ppo_loss(policy: PolicyNetwork, obs: ObsBatch, actions, logp_old, adv, returns, hp: PPOConfig,
             backward: bool = True) -> dict:
    """Forward pass, scalar loss and (optionally) accumulated gradients."""
    out = policy.forward(obs)
    S, K, A = out.logp.shape
    n = S * K
    mask = obs.action_mask
    logp_all = out.logp
    probs = np.where(mask, np.exp(logp_all), 0.0)
    idx_s, idx_k = np.meshgrid(np.arange(S), np.arange(K), indexing="ij")
    logp_a = logp_all[idx_s, idx_k, actions]
    ratio = np.exp(logp_a - logp_old)
    clipped = np.clip(ratio, 1.0 - hp.clip, 1.0 + hp.clip)
    surr1 = ratio * adv
    surr2 = clipped * adv
    use_first = surr1 <= surr2
    policy_loss = -np.where(use_first, surr1, surr2).mean()

    safe_logp = np.where(mask, logp_all, 0.0)
    entropy = -(probs * safe_logp).sum(axis=-1)
    value_err = out.value - returns
    value_loss = (value_err ** 2).mean()
    loss = policy_loss + hp.value_coef * value_loss - hp.entropy_coef * entropy.mean()

    stats = {"loss": float(loss), "policy_loss": float(policy_loss), "value_loss": float(value_loss),
             "entropy": float(entropy.mean()),
             "clip_frac": float((np.abs(ratio - 1.0) > hp.clip).mean()),
             "approx_kl": float((logp_old - logp_a).mean())}
    if not backward or not np.isfinite(loss):
        return stats

    dlogp_a = np.where(use_first, -ratio * adv, 0.0) / n
    onehot = np.zeros_like(probs)
    onehot[idx_s, idx_k, actions] = 1.0
    dlogits = dlogp_a[..., None] * (onehot - probs)
    dlogits += (hp.entropy_coef / n) * probs * (safe_logp + entropy[..., None])
    dlogits = np.where(mask, dlogits, 0.0)
    dvalue = hp.value_coef * 2.0 * value_err / n
    policy.backward(dlogits, dvalue)
    return stats


class PPOTrainer:
    def __init__(self, policy: PolicyNetwork, hp: PPOConfig = PPOConfig()):
        self.policy = policy
        self.hp = hp
        self.reward_stats = RunningMoments()
        params = policy.parameters()
        self.optimizer = Adam([p for _, p, _ in params], [g for _, _, g in params], lr=hp.lr,
                              max_grad_norm=hp.max_grad_norm)

    def update(self, rollout: Rollout, rng: np.random.Generator) -> dict:
        hp = self.hp
        # The critic regresses rewards in running-normalised units (an affine map of -G2).
        self.reward_stats.update(rollout.rewards)
        rewards = self.reward_stats.normalize(rollout.rewards)
        adv = advantages(rewards, rollout.values_old, hp.normalize_advantage)
        returns = np.broadcast_to(rewards[:, None], rollout.values_old.shape)
        K = rollout.actions.shape[1]
        per_mb = max(1, hp.minibatch_size // K)
        history = []
        for _ in range(hp.epochs):
            order = rng.permutation(rollout.n_slots)
            for start in range(0, rollout.n_slots, per_mb):
                idx = order[start:start + per_mb]
                mb = rollout.take(idx)
                self.policy.zero_grad()
                stats = ppo_loss(self.policy, mb.obs, mb.actions, mb.logp_old, adv[idx], returns[idx], hp)
                if not np.isfinite(stats["loss"]):
                    return {"aborted": True, **stats}
                stats["grad_norm"] = self.optimizer.step()
                history.append(stats)
        self.policy.zero_grad()
        keys = history[0].keys()
        return {"aborted": False, **{k: float(np.mean([h[k] for h in history])) for k in keys}}


def ppo_update(rollout: Rollout, trainer: PPOTrainer, rng: np.random.Generator) -> dict:
    return trainer.update(rollout, rng)
