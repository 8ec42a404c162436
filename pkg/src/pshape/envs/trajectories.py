"""Random-exploration trajectory collection and the trajectory file format.

Trajectories store each environment's raw state (grid cell, pendulum angle and
velocity, arm joints and goal) rather than full observations; observations are
a deterministic function of the raw state and are rebuilt with
``env.observe_states``. This keeps gridworld files two orders of magnitude
smaller than storing the (17, 17, 3) observation tensors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..diffnet import container


@dataclass
class Trajectory:
    states: np.ndarray   # (T + 1, state_dim): s_0 .. s_T
    actions: np.ndarray  # (T, action_dim)
    rewards: np.ndarray  # (T,)
    dones: np.ndarray    # (T,)

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class TrajectorySet:
    env_spec: dict
    trajectories: list = field(default_factory=list)
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.trajectories)

    def lengths(self) -> list[int]:
        return [len(t) for t in self.trajectories]

    def all_states(self) -> np.ndarray:
        """Raw states s_0..s_{T-1} of every trajectory, stacked."""
        return np.concatenate([t.states[:-1] for t in self.trajectories], axis=0)

    def save(self, path) -> None:
        lengths = self.lengths()
        arrays = {
            "states": np.concatenate([t.states for t in self.trajectories], axis=0),
            "actions": np.concatenate([t.actions for t in self.trajectories], axis=0),
            "rewards": np.concatenate([t.rewards for t in self.trajectories]),
            "dones": np.concatenate([t.dones for t in self.trajectories]),
        }
        meta = {
            "env": self.env_spec,
            "count": len(lengths),
            "lengths": lengths,
            "state_dim": int(arrays["states"].shape[1]),
            "action_dim": int(arrays["actions"].shape[1]),
            "seed": self.seed,
        }
        container.save(path, "trajectories", arrays, meta)

    @classmethod
    def load(cls, path) -> "TrajectorySet":
        meta, arrays = container.load(path, "trajectories")
        out = cls(meta["env"], [], meta.get("seed"))
        s0 = a0 = 0
        for n in meta["lengths"]:
            out.trajectories.append(Trajectory(
                arrays["states"][s0:s0 + n + 1], arrays["actions"][a0:a0 + n],
                arrays["rewards"][a0:a0 + n], arrays["dones"][a0:a0 + n]))
            s0 += n + 1
            a0 += n
        return out


def collect_random_trajectories(env, count: int, max_len: int, rng: np.random.Generator,
                                seed: int | None = None, stop_at_goal: bool = False) -> TrajectorySet:
    """Roll out uniformly random actions for ``max_len`` steps per trajectory.

    Exploration resets are time-based only: reaching the goal does not end a
    trajectory unless ``stop_at_goal`` is set, so goal states are visited and
    passed through like any other state.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    env = copy.copy(env)
    env.horizon = max_len
    out = TrajectorySet(dict(env.spec(), horizon=max_len), [], seed)
    for _ in range(count):
        env.reset(rng)
        states = [env.raw_state()]
        actions, rewards, dones = [], [], []
        done = False
        while not done:
            a = env.random_action(rng)
            _, r, done = env.step(a)
            if not stop_at_goal:
                done = env.t >= max_len
            states.append(env.raw_state())
            actions.append(np.atleast_1d(np.asarray(a, dtype=np.float64)))
            rewards.append(r)
            dones.append(float(done))
        out.trajectories.append(Trajectory(np.array(states), np.array(actions), np.array(rewards),
                                           np.array(dones)))
    return out
