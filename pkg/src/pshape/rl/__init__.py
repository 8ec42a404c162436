"""PPO learner with discrete and continuous heads."""

from .policy import PolicyModel, clip_action, evaluate_actions, init_policy, policy_for_env, policy_step
from .ppo import PpoConfig, RolloutBuffer, compute_gae, normalize, ppo_loss, ppo_update
from .train import CURVE_COLUMNS, Agent, Featurizer, run_episode, success_rate, train_policy

__all__ = [
    "Agent", "CURVE_COLUMNS", "Featurizer", "PolicyModel", "PpoConfig", "RolloutBuffer", "clip_action",
    "compute_gae", "evaluate_actions", "init_policy", "normalize", "policy_for_env", "policy_step", "ppo_loss",
    "ppo_update", "run_episode", "success_rate", "train_policy",
]
