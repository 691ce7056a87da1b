"""Learned P2 solver: shared-parameter multi-agent PPO with attention messages."""

from .policy import (LearnedSolver, ObsBatch, ObsNorm, PolicyNetwork, act, build_observations,
                     load_checkpoint, save_checkpoint)
from .ppo import PPOConfig, PPOTrainer, Rollout, ppo_loss, ppo_update
from .training import TrainConfig, TrainResult, evaluate_policy, train

__all__ = [
    "LearnedSolver", "ObsBatch", "ObsNorm", "PolicyNetwork", "act", "build_observations",
    "load_checkpoint", "save_checkpoint", "PPOConfig", "PPOTrainer", "Rollout", "ppo_loss",
    "ppo_update", "TrainConfig", "TrainResult", "evaluate_policy", "train",
]
