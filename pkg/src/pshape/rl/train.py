"""Rollout collection, the training loop and deterministic evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import diffnet as dn
from ..shaping import RewardScheme, Transition
from .policy import PolicyModel, clip_action, distribution, policy_for_env, policy_step
from .ppo import PpoConfig, RolloutBuffer, compute_gae, ppo_update

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("env_steps", "mean_env_return", "success_rate", "policy_loss", "value_loss", "entropy",
                 "clip_fraction")


class RunningNorm:
    """Running mean/variance of policy inputs (parallel-variance merge)."""

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = eps
        self.clip = clip
        self.eps = eps

    def update(self, x: np.ndarray) -> None:
        x = np.atleast_2d(x)
        n = len(x)
        bm, bv = x.mean(axis=0), x.var(axis=0)
        delta = bm - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * (n / tot)
        self.var = (self.var * self.count + bv * n + delta * delta * (self.count * n / tot)) / tot
        self.count = tot

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + self.eps), -self.clip, self.clip)


class RewardScaler:
    """Divides rewards by the running std of the discounted return (no centering)."""

    def __init__(self, gamma: float, clip: float = 10.0, eps: float = 1e-8):
        self.gamma = gamma
        self.ret = 0.0
        self.stats = RunningNorm(1)
        self.clip = clip
        self.eps = eps

    def __call__(self, reward: float, done: bool) -> float:
        self.ret = self.ret * self.gamma + reward
        self.stats.update(np.array([[self.ret]]))
        if done:
            self.ret = 0.0
        scaled = reward / math.sqrt(float(self.stats.var[0]) + self.eps)
        return min(max(scaled, -self.clip), self.clip)


class Featurizer:
    """Maps observations to policy inputs: identity or CPC embeddings,
    followed by running standardization when ``normalize`` is set."""

    def __init__(self, mode: str = "raw", encoder=None, obs_dim: int | None = None, discrete: bool = False,
                 normalize: bool = True):
        if mode not in ("raw", "embedding"):
            raise ValueError(f"unknown feature mode {mode!r}")
        if mode == "embedding" and encoder is None:
            raise ValueError("embedding features need an encoder")
        self.mode = mode
        self.encoder = encoder
        self.discrete = discrete
        self.dim = encoder.config.embedding if mode == "embedding" else obs_dim
        self.norm = RunningNorm(self.dim) if normalize else None
        self._cache: dict = {}

    def base(self, observation) -> np.ndarray:
        obs = np.asarray(observation, dtype=np.float64).reshape(-1)
        if self.mode == "raw":
            return obs
        from ..cpc import encode_state

        if self.discrete:
            key = obs.tobytes()
            z = self._cache.get(key)
            if z is None:
                z = self._cache[key] = encode_state(self.encoder, obs)
            return z
        return encode_state(self.encoder, obs)

    def __call__(self, observation, update: bool = False) -> np.ndarray:
        f = self.base(observation)
        if self.norm is None:
            return f
        if update:
            self.norm.update(f)
        return self.norm(f)

    def state(self) -> dict:
        if self.norm is None:
            return {}
        return {"mean": self.norm.mean, "var": self.norm.var, "count": np.array([self.norm.count])}

    def load_state(self, arrays: dict) -> None:
        if not arrays:
            self.norm = None
            return
        self.norm = RunningNorm(len(arrays["mean"]))
        self.norm.mean = np.array(arrays["mean"])
        self.norm.var = np.array(arrays["var"])
        self.norm.count = float(arrays["count"][0])


@dataclass
class Agent:
    """One policy, or two policies switched on goal-cluster entry."""

    models: list
    featurizer: Featurizer
    phase_scheme: RewardScheme | None = None  # tracks cluster phase in two-policy mode
    meta: dict = field(default_factory=dict)

    @property
    def model(self) -> PolicyModel:
        return self.models[0]

    @property
    def two_policy(self) -> bool:
        return len(self.models) == 2

    def begin_episode(self, env, obs) -> int:
        if self.two_policy:
            self.phase_scheme.begin_episode(env, obs)
            return self.phase_scheme.phase - 1
        return 0

    def observe_next(self, next_obs, current: int) -> int:
        """Index of the policy that acts from ``next_obs``."""
        if not self.two_policy or current == 1:
            return current
        hit = self.phase_scheme.clusters.assign(self.phase_scheme.embed(next_obs)[None])[0]
        return 1 if hit == self.phase_scheme.clusters.goal_id else 0

    def act(self, obs, rng=None, deterministic=True, which: int = 0):
        a, _, _ = policy_step(self.models[which], self.featurizer(obs), rng, deterministic)
        return clip_action(self.models[which], a)

    def save(self, path, extra: dict | None = None) -> None:
        parts = {f"p{i}": m.params for i, m in enumerate(self.models)}
        norm = self.featurizer.state()
        if norm:
            parts["norm"] = dn.ParameterSet(norm, {})
        params = dn.ParameterSet.merge(parts)
        m = self.model
        meta = dict(self.meta)
        meta.update({
            "n_policies": len(self.models), "obs_dim": m.obs_dim, "discrete": m.discrete,
            "action_dim": m.action_dim, "feature_mode": self.featurizer.mode, "normalized": bool(norm),
            "action_low": None if m.action_low is None else m.action_low.tolist(),
            "action_high": None if m.action_high is None else m.action_high.tolist(),
        })
        meta.update(extra or {})
        params.save(path, "policy", meta)

    @classmethod
    def load(cls, path, featurizer: Featurizer | None = None, phase_scheme=None) -> "Agent":
        params, meta = dn.ParameterSet.load(path, "policy")
        low = None if meta["action_low"] is None else np.array(meta["action_low"])
        high = None if meta["action_high"] is None else np.array(meta["action_high"])
        models = [PolicyModel(params.sub(f"p{i}"), meta["obs_dim"], meta["discrete"], meta["action_dim"], low, high)
                  for i in range(meta["n_policies"])]
        if featurizer is None:
            if meta["feature_mode"] != "raw":
                raise ValueError("policy uses embedding features; pass a featurizer with the encoder")
            featurizer = Featurizer("raw", obs_dim=meta["obs_dim"])
        norm = params.sub("norm")
        featurizer.load_state({k: t.data for k, t in norm.items()} if meta.get("normalized") else {})
        if len(models) == 2 and phase_scheme is None:
            raise ValueError("two-policy agent needs the cluster scheme for phase tracking")
        return cls(models, featurizer, phase_scheme, meta)


def run_episode(agent: Agent, env, rng: np.random.Generator, deterministic: bool = True) -> tuple[bool, float, int]:
    """Play one episode from a random spawn; returns (success, env return, steps)."""
    obs = env.reset(rng)
    which = agent.begin_episode(env, obs)
    total, steps, done = 0.0, 0, False
    while not done:
        a = agent.act(obs, rng, deterministic, which)
        obs, r, done = env.step(a)
        total += r
        steps += 1
        which = agent.observe_next(obs, which)
    return bool(env.is_success()), total, steps


def success_rate(agent: Agent, env, episodes: int, rng: np.random.Generator) -> float:
    """Fraction of deterministic episodes that reach the goal within the horizon."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    return float(np.mean([run_episode(agent, env, rng, True)[0] for _ in range(episodes)]))


def _value(model: PolicyModel, feat) -> float:
    return float(distribution(model, feat)[1][0])


def train_policy(env, scheme: RewardScheme, config: PpoConfig, rng: np.random.Generator,
                 featurizer: Featurizer | None = None, progress=None) -> tuple[Agent, list[dict]]:
    """PPO on ``env`` with rewards from ``scheme``.

    Each iteration collects ``config.horizon`` steps, updates, then scores
    ``config.eval_episodes`` deterministic episodes. The logged return is the
    environment's own reward, without shaping terms.
    """
    if featurizer is None:
        if config.feature_mode != "raw":
            raise ValueError("embedding feature mode needs a featurizer built from the encoder")
        featurizer = Featurizer("raw", obs_dim=env.obs_dim, normalize=config.normalize_obs)
    if config.two_policy and scheme.variant != "ClusterBonus":
        raise ValueError("two-policy mode applies to the ClusterBonus scheme only")
    n_pol = 2 if config.two_policy else 1
    models = [policy_for_env(env, featurizer.dim, rng) for _ in range(n_pol)]
    phase_scheme = None
    if config.two_policy:
        phase_scheme = RewardScheme("ClusterBonus", encoder=scheme.encoder, clusters=scheme.clusters)
    agent = Agent(models, featurizer, phase_scheme, {"scheme": scheme.describe(), "env": env.spec()})
    opts = [dn.AdamState.for_params(m.params, lr=config.lr) for m in models]
    eval_seed = int(rng.integers(2 ** 62))
    eval_env = make_eval_env(env)

    obs = env.reset(rng)
    scheme.begin_episode(env, obs)
    which = scheme.phase - 1 if config.two_policy else 0
    feat = featurizer(obs, update=True)
    scaler = RewardScaler(config.gamma) if config.normalize_reward else None
    ep_return = 0.0
    curve: list[dict] = []
    steps = 0
    for it in range(config.iterations):
        bufs = [RolloutBuffer() for _ in range(n_pol)]
        finished: list[float] = []
        for _ in range(config.horizon):
            model = models[which]
            a, logp, v = policy_step(model, feat, rng)
            a_env = clip_action(model, a)
            state = env.raw_state()
            next_obs, r, done = env.step(a_env)
            tr = Transition(obs, a_env, r, next_obs, done, state, env.raw_state(), env.is_success())
            shaped = scheme(env.env_id, tr)
            switched = config.two_policy and which == 0 and shaped.phase == 2
            reward = scaler(shaped.reward, done) if scaler is not None else shaped.reward
            if done and not tr.success:
                # time limit, not a terminal state: bootstrap from the value of the last observation
                reward += config.gamma * _value(model, featurizer(next_obs))
            bufs[which].add(feat, a, logp, v, reward, done or switched)
            ep_return += r
            steps += 1
            if done:
                finished.append(ep_return)
                ep_return = 0.0
                obs = env.reset(rng)
                scheme.begin_episode(env, obs)
                which = scheme.phase - 1 if config.two_policy else 0
            else:
                obs = next_obs
                if switched:
                    which = 1
            feat = featurizer(obs, update=True)
        stats = []
        for i, (m, buf) in enumerate(zip(models, bufs)):
            if len(buf) < 2:
                continue
            buf.last_value = _value(m, feat) if i == which else 0.0
            compute_gae(buf, config.gamma, config.lam)
            stats.append((len(buf), ppo_update(m, buf, config, opts[i], rng)))
        sr = success_rate(agent, eval_env, config.eval_episodes, np.random.default_rng([eval_seed, it])) \
            if config.eval_episodes > 0 else math.nan
        row = {"env_steps": steps, "mean_env_return": float(np.mean(finished)) if finished else math.nan,
               "success_rate": sr}
        for key in ("policy_loss", "value_loss", "entropy", "clip_fraction"):
            total = sum(n for n, s in stats if s)
            row[key] = sum(n * s[key] for n, s in stats if s) / total if total else math.nan
        curve.append(row)
        if progress is not None:
            progress(it + 1, config.iterations, row)
    return agent, curve


def make_eval_env(env):
    """Fresh copy of ``env`` so evaluation never disturbs the training episode."""
    from ..envs import make_env

    return make_env(env.spec())
