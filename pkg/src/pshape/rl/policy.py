"""Actor-critic networks with categorical or diagonal-Gaussian action heads."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import diffnet as dn
from ..diffnet import tensor as T

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PolicyModel:
    """Separate actor and critic MLPs (two hidden layers of 64, tanh).

    Discrete heads output logits over ``n_actions``; continuous heads output
    a Gaussian mean and use a learned, state-independent log-std.
    """

    params: dn.ParameterSet
    obs_dim: int
    discrete: bool
    action_dim: int  # number of actions (discrete) or action vector size
    action_low: np.ndarray | None = None
    action_high: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def _view(self, prefix: str) -> dn.ParameterSet:
        # views share tensors with self.params; rebuild only if params is replaced
        cache = self.__dict__.setdefault("_views", {})
        hit = cache.get(prefix)
        if hit is None or hit[0] is not self.params:
            hit = cache[prefix] = (self.params, self.params.sub(prefix))
        return hit[1]

    @property
    def actor(self) -> dn.ParameterSet:
        return self._view("actor")

    @property
    def critic(self) -> dn.ParameterSet:
        return self._view("critic")

    def log_std(self) -> np.ndarray:
        return np.clip(self.params["log_std"].data, LOG_STD_MIN, LOG_STD_MAX)

    def save(self, path, extra: dict | None = None) -> None:
        meta = dict(self.meta)
        meta.update({
            "obs_dim": self.obs_dim, "discrete": self.discrete, "action_dim": self.action_dim,
            "action_low": None if self.action_low is None else self.action_low.tolist(),
            "action_high": None if self.action_high is None else self.action_high.tolist(),
        })
        meta.update(extra or {})
        self.params.save(path, "policy", meta)

    @classmethod
    def load(cls, path) -> "PolicyModel":
        params, meta = dn.ParameterSet.load(path, "policy")
        low, high = meta.pop("action_low"), meta.pop("action_high")
        return cls(params, meta.pop("obs_dim"), meta.pop("discrete"), meta.pop("action_dim"),
                   None if low is None else np.array(low), None if high is None else np.array(high), meta)


def init_policy(obs_dim: int, rng: np.random.Generator, *, discrete: bool, action_dim: int,
                action_low=None, action_high=None, hidden: int = 64) -> PolicyModel:
    actor = dn.init_mlp([obs_dim, hidden, hidden, action_dim], rng)
    # small last layer: near-uniform / near-zero-mean initial policy
    last = f"l{2}.w"
    actor[last].data *= 0.01
    critic = dn.init_mlp([obs_dim, hidden, hidden, 1], rng)
    parts = {"actor": actor, "critic": critic}
    flat = dn.ParameterSet.merge(parts)
    tensors = {n: t for n, t in flat.items()}
    if not discrete:
        tensors["log_std"] = dn.Tensor(np.zeros(action_dim), requires_grad=True)
    params = dn.ParameterSet(tensors, flat.layout)
    low = None if action_low is None else np.asarray(action_low, dtype=np.float64)
    high = None if action_high is None else np.asarray(action_high, dtype=np.float64)
    return PolicyModel(params, obs_dim, discrete, action_dim, low, high)


def policy_for_env(env, obs_dim: int, rng: np.random.Generator) -> PolicyModel:
    if env.discrete:
        return init_policy(obs_dim, rng, discrete=True, action_dim=env.n_actions)
    return init_policy(obs_dim, rng, discrete=False, action_dim=int(np.prod(env.action_shape)),
                       action_low=env.action_low, action_high=env.action_high)


def _log_softmax_np(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    s = x - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def distribution(model: PolicyModel, features: np.ndarray):
    """Numpy forward pass: (logits or mean, values) for a batch of features."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    head = dn.mlp_apply(model.actor, x)
    value = dn.mlp_apply(model.critic, x)[:, 0]
    if not (np.all(np.isfinite(head)) and np.all(np.isfinite(value))):
        raise FloatingPointError("policy network produced non-finite outputs")
    return head, value


def policy_step(model: PolicyModel, observation, rng: np.random.Generator | None, deterministic: bool = False):
    """Sample (or take the mode of) the action distribution.

    Returns ``(action, log_prob, value)``. Continuous actions are the raw
    Gaussian sample; callers clip to the environment bounds before stepping.
    """
    head, value = distribution(model, observation)
    head, v = head[0], float(value[0])
    if model.discrete:
        logp = _log_softmax_np(head)
        if deterministic:
            a = int(np.argmax(head))
        else:
            a = int(rng.choice(len(logp), p=np.exp(logp) / np.exp(logp).sum()))
        return a, float(logp[a]), v
    log_std = model.log_std()
    if deterministic:
        a = head.copy()
    else:
        a = head + np.exp(log_std) * rng.standard_normal(model.action_dim)
    z = (a - head) / np.exp(log_std)
    logp = float(np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI))
    return a, logp, v


def clip_action(model: PolicyModel, action):
    if model.discrete:
        return action
    return np.clip(action, model.action_low, model.action_high)


def evaluate_actions(model: PolicyModel, features: np.ndarray, actions: np.ndarray):
    """Tape forward pass: (log_probs, entropy per sample, values) as tensors."""
    x = T.Tensor(np.asarray(features, dtype=np.float64))
    head = dn.mlp_forward(model.actor, x)
    values = dn.mlp_forward(model.critic, x).reshape(-1)
    n = len(actions)
    if model.discrete:
        lp = T.log_softmax(head, axis=1)
        idx = np.asarray(actions, dtype=np.int64).reshape(-1)
        logp = lp[np.arange(n), idx]
        entropy = -(T.exp(lp) * lp).sum(axis=1)
        return logp, entropy, values
    log_std = T.clip(model.params["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    a = np.asarray(actions, dtype=np.float64).reshape(n, model.action_dim)
    z = (T.as_tensor(a) - head) * T.exp(-log_std)
    logp = (z * z * -0.5 - log_std - HALF_LOG_2PI).sum(axis=1)
    entropy = (log_std + 0.5 + HALF_LOG_2PI).sum() * np.ones(n)
    return logp, entropy, values
