"""Torque-limited pendulum swing-up with a sparse "hold the top" goal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAVITY = 10.0
MASS = 1.0
LENGTH = 1.0
DT = 0.05
MAX_TORQUE = 2.0
MAX_SPEED = 8.0
GOAL_ANGLE = 0.1
GOAL_HOLD = 5


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = (theta + np.pi) % (2 * np.pi) - np.pi
    return np.pi if w == -np.pi else w


@dataclass
class PendulumState:
    theta: float  # 0 is upright
    omega: float


class Pendulum:
    """Semi-implicit Euler pendulum; observation is (cos theta, sin theta, omega).

    The sparse reward (+1, episode ends) fires once the angle has stayed within
    ``[-0.1, 0.1]`` for five consecutive steps.
    """

    env_id = "pendulum"
    discrete = False
    n_actions = None
    obs_shape = (3,)
    obs_dim = 3
    action_shape = (1,)
    action_low = np.array([-MAX_TORQUE])
    action_high = np.array([MAX_TORQUE])

    def __init__(self, horizon: int = 200):
        self.horizon = horizon
        self.state: PendulumState | None = None
        self.t = 0
        self.hold = 0

    def spec(self) -> dict:
        return {"id": self.env_id, "horizon": self.horizon}

    @staticmethod
    def observe(theta, omega) -> np.ndarray:
        return np.array([np.cos(theta), np.sin(theta), omega], dtype=np.float64)

    def observe_states(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64).reshape(-1, 2)
        return np.stack([np.cos(states[:, 0]), np.sin(states[:, 0]), states[:, 1]], axis=1)

    def goal_observation(self) -> np.ndarray:
        return self.observe(0.0, 0.0)

    def goal_observation_for(self, raw_state) -> np.ndarray:
        return self.goal_observation()

    def raw_state(self) -> np.ndarray:
        return np.array([self.state.theta, self.state.omega])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        theta = wrap_angle(rng.uniform(-np.pi, np.pi))
        omega = rng.uniform(-1.0, 1.0)
        return self.set_state(theta, omega)

    def set_state(self, theta: float, omega: float) -> np.ndarray:
        self.state = PendulumState(wrap_angle(float(theta)), float(np.clip(omega, -MAX_SPEED, MAX_SPEED)))
        self.t = 0
        self.hold = 0
        return self.observe(self.state.theta, self.state.omega)

    def step(self, action):
        u = np.asarray(action, dtype=np.float64).reshape(-1)
        if u.shape != (1,) or not np.isfinite(u[0]) or abs(u[0]) > MAX_TORQUE + 1e-12:
            raise ValueError(f"pendulum torque must be a scalar in [-{MAX_TORQUE}, {MAX_TORQUE}], got {action!r}")
        u = min(max(float(u[0]), -MAX_TORQUE), MAX_TORQUE)
        th, om = self.state.theta, self.state.omega
        accel = 3.0 * GRAVITY / (2.0 * LENGTH) * np.sin(th) + 3.0 / (MASS * LENGTH ** 2) * u
        om = min(max(float(om + DT * accel), -MAX_SPEED), MAX_SPEED)
        th = wrap_angle(th + DT * om)
        self.state = PendulumState(th, om)
        self.t += 1
        self.hold = self.hold + 1 if abs(th) <= GOAL_ANGLE else 0
        reached = self.hold >= GOAL_HOLD
        done = reached or self.t >= self.horizon
        return self.observe(th, om), (1.0 if reached else 0.0), done

    def is_success(self) -> bool:
        return self.hold >= GOAL_HOLD

    def random_action(self, rng: np.random.Generator):
        return rng.uniform(-MAX_TORQUE, MAX_TORQUE, size=1)
