"""Reward schemes layered over an environment's sparse reward.

Every scheme keeps the environment's own reward (1 on reaching the goal) and
adds a shaping term:

* ``Sparse``             nothing
* ``HandShaped``         domain penalty (pendulum angle/velocity/torque, reacher tip distance)
* ``RawDistance``        -beta * ||s_t - s_g||^2 in observation space
* ``EmbeddingDistance``  -beta * ||z(s_t) - z(s_g)||^2 in CPC embedding space
* ``ClusterBonus``       one-off bonus on first entry into the goal's k-means cluster

Distance and hand terms score the state the action was taken from; the
cluster bonus scores the state the transition lands in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel, assign_cluster
from .envs.reacher import fingertip

log = logging.getLogger(__name__)

VARIANTS = ("Sparse", "HandShaped", "RawDistance", "EmbeddingDistance", "ClusterBonus")

PENDULUM_ALPHA = 0.1
PENDULUM_BETA = 0.001
REACHER_ALPHA = 0.01
DEFAULT_BONUS = 0.5
PENALTY_TARGET = 0.1


@dataclass
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    done: bool
    state: np.ndarray | None = None       # raw env state before the action
    next_state: np.ndarray | None = None  # raw env state after it
    success: bool = False


@dataclass
class ShapedTransition:
    transition: Transition
    reward: float
    phase: int = 1


# scheme terms ---------------------------------------------------------------
def shape_sparse(transition: Transition) -> float:
    return float(transition.reward)


def shape_hand_pendulum(state, action, alpha: float = PENDULUM_ALPHA, beta: float = PENDULUM_BETA) -> float:
    """-(theta^2 + alpha |omega| + beta ||a||) for a raw (theta, omega) state."""
    theta, omega = float(state[0]), float(state[1])
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    return -(theta * theta + alpha * abs(omega) + beta * float(np.linalg.norm(a)))


def shape_hand_reacher(state, action, alpha: float = REACHER_ALPHA) -> float:
    """-(||tip - goal|| + alpha ||a||) for a raw (theta1, theta2, gx, gy, ...) state."""
    s = np.asarray(state, dtype=np.float64)
    tip = fingertip(s[0], s[1])
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    return -(float(np.linalg.norm(tip - s[2:4])) + alpha * float(np.linalg.norm(a)))


def shape_raw_distance(observation, goal_observation, beta: float) -> float:
    s = np.asarray(observation, dtype=np.float64)
    g = np.asarray(goal_observation, dtype=np.float64)
    if s.shape != g.shape:
        raise ValueError(f"observation shape {s.shape} does not match goal shape {g.shape}")
    d = s - g
    return -beta * float(d @ d) if d.ndim == 1 else -beta * float(np.sum(d * d))


def shape_embedding_distance(encoder, observation, goal_observation, beta: float, goal_embedding=None) -> float:
    """-beta ||z(s) - z(g)||^2; pass ``goal_embedding`` to skip re-encoding the goal."""
    from .cpc import encode_state

    if encoder is None:
        raise ValueError("embedding-distance shaping needs a trained encoder")
    z = encode_state(encoder, observation)
    zg = goal_embedding if goal_embedding is not None else encode_state(encoder, goal_observation)
    d = z - zg
    return -beta * float(d @ d)


def shape_cluster_bonus(cluster_model: ClusterModel, embedding, phase: int, bonus: float = DEFAULT_BONUS
                        ) -> tuple[float, int]:
    """Bonus and next phase for a state with the given embedding.

    Phase 1 pays ``bonus`` and moves to phase 2 on landing in the goal
    cluster; phase 2 pays nothing further.
    """
    if cluster_model.goal_id is None:
        raise ValueError("cluster model has no goal cluster; run identify_goal_cluster first")
    if phase == 1 and assign_cluster(cluster_model, embedding) == cluster_model.goal_id:
        return bonus, 2
    return 0.0, phase


# scheme object --------------------------------------------------------------
class RewardScheme:
    """Stateful per-episode reward shaper.

    ``begin_episode`` must be called after every reset; the scheme instance is
    owned by one episode runner at a time.
    """

    def __init__(self, variant: str, *, beta: float = 1.0, bonus: float = DEFAULT_BONUS,
                 hand_alpha: float | None = None, hand_beta: float = PENDULUM_BETA,
                 encoder=None, clusters: ClusterModel | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown reward scheme {variant!r}; expected one of {VARIANTS}")
        if variant in ("EmbeddingDistance", "ClusterBonus") and encoder is None:
            raise ValueError(f"{variant} needs an encoder")
        if variant == "ClusterBonus" and (clusters is None or clusters.goal_id is None):
            raise ValueError("ClusterBonus needs a cluster model with its goal cluster set")
        if beta < 0:
            raise ValueError("beta must be non-negative")
        self.variant = variant
        self.beta = float(beta)
        self.bonus = float(bonus)
        self.hand_alpha = hand_alpha
        self.hand_beta = hand_beta
        self.encoder = encoder
        self.clusters = clusters
        self.phase = 1
        self._goal_obs = None
        self._goal_z = None
        self._cache: dict = {}
        self._discrete = False

    def describe(self) -> dict:
        return {"variant": self.variant, "beta": self.beta, "bonus": self.bonus}

    def embed(self, observation) -> np.ndarray:
        """Encoder output, memoized for discrete state spaces."""
        from .cpc import encode_state

        obs = np.asarray(observation, dtype=np.float64)
        if self._discrete:
            key = obs.tobytes()
            z = self._cache.get(key)
            if z is None:
                z = self._cache[key] = encode_state(self.encoder, obs)
            return z
        return encode_state(self.encoder, obs)

    def begin_episode(self, env, observation) -> None:
        self._discrete = bool(getattr(env, "discrete", False))
        self.phase = 1
        if self.variant in ("RawDistance", "EmbeddingDistance"):
            self._goal_obs = env.goal_observation()
            if self.variant == "EmbeddingDistance":
                self._goal_z = self.embed(self._goal_obs)
        if self.variant == "ClusterBonus":
            if assign_cluster(self.clusters, self.embed(observation)) == self.clusters.goal_id:
                self.phase = 2

    def term(self, env_id: str, tr: Transition) -> float:
        """Shaping term only (environment reward excluded)."""
        v = self.variant
        if v == "Sparse":
            return 0.0
        if v == "HandShaped":
            if env_id == "pendulum":
                return shape_hand_pendulum(tr.state, tr.action, self.hand_alpha or PENDULUM_ALPHA, self.hand_beta)
            if env_id == "reacher":
                return shape_hand_reacher(tr.state, tr.action, self.hand_alpha or REACHER_ALPHA)
            raise ValueError(f"no hand-shaped reward defined for {env_id!r}")
        if v == "RawDistance":
            return shape_raw_distance(tr.observation, self._goal_obs, self.beta)
        if v == "EmbeddingDistance":
            d = self.embed(tr.observation) - self._goal_z
            return -self.beta * float(d @ d)
        bonus, self.phase = shape_cluster_bonus(self.clusters, self.embed(tr.next_observation), self.phase,
                                                self.bonus)
        return bonus

    def __call__(self, env_id: str, tr: Transition) -> ShapedTransition:
        return ShapedTransition(tr, shape_sparse(tr) + self.term(env_id, tr), self.phase)


def calibrate_beta(env, states: np.ndarray, variant: str, encoder=None, target: float = PENALTY_TARGET) -> float:
    """Scale so the mean distance penalty over the given raw states equals ``target``."""
    from .cpc import encode_states

    states = np.asarray(states, dtype=np.float64)
    obs = env.observe_states(states)
    goals = np.stack([env.goal_observation_for(s).reshape(-1) for s in states])
    if variant == "RawDistance":
        d = obs - goals
    elif variant == "EmbeddingDistance":
        if encoder is None:
            raise ValueError("EmbeddingDistance calibration needs an encoder")
        z = encode_states(encoder, obs)
        if float(z.var(axis=0).sum()) < 1e-6:
            log.warning("encoder embeddings are degenerate (variance < 1e-6); distance shaping will be ~0")
        d = z - encode_states(encoder, goals)
    else:
        raise ValueError(f"calibration applies to distance schemes, not {variant!r}")
    mean_sq = float(np.mean(np.sum(d * d, axis=1)))
    if mean_sq < 1e-12:
        log.warning("mean squared goal distance is ~0; keeping beta = 1")
        return 1.0
    return target / mean_sq
