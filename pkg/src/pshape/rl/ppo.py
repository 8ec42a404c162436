"""Clipped-surrogate policy optimization with generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import diffnet as dn
from .. import kernels
from ..diffnet import tensor as T
from .policy import PolicyModel, evaluate_actions


@dataclass
class PpoConfig:
    gamma: float = 0.99
    ent_coef: float = 0.01
    lr: float = 2.5e-4
    clip_range: float = 0.2
    max_grad_norm: float = 0.5
    minibatch_size: int = 128
    lam: float = 0.95
    horizon: int = 2048
    epochs: int = 4
    total_steps: int = 300_000
    vf_coef: float = 0.5
    feature_mode: str = "raw"  # "raw" observations or CPC "embedding" features
    eval_episodes: int = 20
    two_policy: bool = False   # ClusterBonus only: separate policies before/after goal-cluster entry
    normalize_obs: bool = True  # running standardization of policy inputs
    normalize_reward: bool = True  # scale rewards by the running std of the discounted return

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.clip_range <= 0:
            raise ValueError("clip_range must be positive")
        if self.minibatch_size < 2 or self.horizon < 1 or self.epochs < 1:
            raise ValueError("minibatch_size >= 2, horizon >= 1 and epochs >= 1 required")
        if self.feature_mode not in ("raw", "embedding"):
            raise ValueError(f"feature_mode must be 'raw' or 'embedding', got {self.feature_mode!r}")

    @property
    def iterations(self) -> int:
        return max(1, self.total_steps // self.horizon)


@dataclass
class RolloutBuffer:
    """Growable per-policy storage for one rollout."""

    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    last_value: float = 0.0
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def add(self, obs, action, log_prob, value, reward, done) -> None:
        self.obs.append(obs)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.values.append(value)
        self.rewards.append(reward)
        self.dones.append(float(done))

    def __len__(self) -> int:
        return len(self.rewards)

    def arrays(self) -> dict:
        return {
            "obs": np.asarray(self.obs, dtype=np.float64),
            "actions": np.asarray(self.actions, dtype=np.float64),
            "log_probs": np.asarray(self.log_probs, dtype=np.float64),
            "values": np.asarray(self.values, dtype=np.float64),
        }


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Raw GAE advantages and value targets; also stored on the buffer.

    ``buffer.last_value`` bootstraps the state after the final step (ignored
    when that step is terminal). Normalization happens per minibatch in
    :func:`ppo_update`.
    """
    values = np.asarray(buffer.values, dtype=np.float64)
    adv = kernels.gae(buffer.rewards, values, buffer.dones, buffer.last_value, gamma, lam)
    buffer.advantages = adv
    buffer.returns = adv + values
    return adv, buffer.returns


def normalize(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8) if std > 0 else adv - adv.mean()


def ppo_loss(model: PolicyModel, obs, actions, old_log_probs, advantages, returns, config: PpoConfig):
    """Total loss tensor plus a dict of diagnostics for one minibatch."""
    logp, entropy, values = evaluate_actions(model, obs, actions)
    ratio = T.exp(logp - old_log_probs)
    eps = config.clip_range
    surr = T.minimum(ratio * advantages, T.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages)
    policy_loss = -surr.mean()
    diff = values - returns
    value_loss = (diff * diff).mean()
    ent = entropy.mean()
    loss = policy_loss + config.vf_coef * value_loss - config.ent_coef * ent
    r = ratio.data
    stats = {
        "policy_loss": policy_loss.item(), "value_loss": value_loss.item(), "entropy": ent.item(),
        "ratio_mean": float(r.mean()), "ratio_min": float(r.min()), "ratio_max": float(r.max()),
        "clip_fraction": float(np.mean(np.abs(r - 1.0) > eps)),
    }
    return loss, stats


def ppo_update(model: PolicyModel, buffer: RolloutBuffer, config: PpoConfig, opt: dn.AdamState,
               rng: np.random.Generator) -> dict:
    """Epochs of shuffled minibatch steps; returns averaged diagnostics.

    A trailing minibatch shorter than half the minibatch size is folded into
    the previous one so advantage normalization always sees enough samples.
    """
    if buffer.advantages is None:
        raise ValueError("compute_gae must run before ppo_update")
    data = buffer.arrays()
    n = len(buffer)
    mb = config.minibatch_size
    if n < 2:
        return {}
    log = []
    first = None
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        bounds = list(range(0, n, mb)) + [n]
        if len(bounds) > 2 and bounds[-1] - bounds[-2] < mb // 2:
            bounds.pop(-2)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = perm[lo:hi]
            if len(idx) < 2:
                continue
            adv = normalize(buffer.advantages[idx])
            loss, stats = ppo_loss(model, data["obs"][idx], data["actions"][idx], data["log_probs"][idx], adv,
                                   buffer.returns[idx], config)
            if not np.isfinite(loss.item()):
                raise FloatingPointError(f"PPO loss is not finite; minibatch stats {stats}")
            if first is None:
                first = stats
            grads = dn.backward(loss, model.params)
            stats["grad_norm"] = dn.clip_by_global_norm(grads, config.max_grad_norm)
            dn.adam_step(opt, model.params, grads)
            log.append(stats)
    out = {k: float(np.mean([s[k] for s in log])) for k in log[0]}
    out["first_ratio_max_dev"] = max(abs(first["ratio_min"] - 1.0), abs(first["ratio_max"] - 1.0))
    return out
