"""Kinematic two-link planar arm (velocity-controlled joints, no inertia)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pendulum import wrap_angle

LINKS = (0.1, 0.1)
DT = 0.1
MAX_VEL = 1.0
GOAL_RADIUS = 0.02


def fingertip(theta1, theta2) -> np.ndarray:
    l1, l2 = LINKS
    return np.array([l1 * np.cos(theta1) + l2 * np.cos(theta1 + theta2),
                     l1 * np.sin(theta1) + l2 * np.sin(theta1 + theta2)])


def inverse_kinematics(goal, near=None) -> tuple[float, float]:
    """Joint angles placing the fingertip at ``goal``.

    Of the two elbow solutions, returns the one closest (in wrapped joint
    angle) to ``near`` when given, else the positive-elbow one.
    """
    l1, l2 = LINKS
    gx, gy = float(goal[0]), float(goal[1])
    c2 = np.clip((gx * gx + gy * gy - l1 * l1 - l2 * l2) / (2 * l1 * l2), -1.0, 1.0)
    options = []
    for sign in (1.0, -1.0):
        t2 = sign * np.arccos(c2)
        t1 = np.arctan2(gy, gx) - np.arctan2(l2 * np.sin(t2), l1 + l2 * np.cos(t2))
        options.append((wrap_angle(t1), wrap_angle(t2)))
    if near is None:
        return options[0]

    def gap(opt):
        return sum(abs(wrap_angle(a - b)) for a, b in zip(opt, near))

    return min(options, key=gap)


@dataclass
class ReacherState:
    theta1: float
    theta2: float
    goal: np.ndarray
    vel: np.ndarray

    @property
    def tip(self) -> np.ndarray:
        return fingertip(self.theta1, self.theta2)


class Reacher:
    """Observation (11,): cos/sin of both joints, goal xy, joint velocities,
    fingertip-minus-goal xy, and fingertip-goal distance."""

    env_id = "reacher"
    discrete = False
    n_actions = None
    obs_shape = (11,)
    obs_dim = 11
    action_shape = (2,)
    action_low = np.array([-MAX_VEL, -MAX_VEL])
    action_high = np.array([MAX_VEL, MAX_VEL])

    def __init__(self, horizon: int = 50):
        self.horizon = horizon
        self.state: ReacherState | None = None
        self.t = 0
        self._goal_angles = None

    def spec(self) -> dict:
        return {"id": self.env_id, "horizon": self.horizon}

    @staticmethod
    def observe(theta1, theta2, goal, vel) -> np.ndarray:
        d = fingertip(theta1, theta2) - goal
        return np.array([np.cos(theta1), np.cos(theta2), np.sin(theta1), np.sin(theta2), goal[0], goal[1],
                         vel[0], vel[1], d[0], d[1], np.hypot(d[0], d[1])])

    def observe_states(self, states: np.ndarray) -> np.ndarray:
        """Raw states are rows of (theta1, theta2, goal_x, goal_y, vel1, vel2)."""
        s = np.asarray(states, dtype=np.float64).reshape(-1, 6)
        t1, t2 = s[:, 0], s[:, 1]
        l1, l2 = LINKS
        tip = np.stack([l1 * np.cos(t1) + l2 * np.cos(t1 + t2), l1 * np.sin(t1) + l2 * np.sin(t1 + t2)], axis=1)
        d = tip - s[:, 2:4]
        return np.column_stack([np.cos(t1), np.cos(t2), np.sin(t1), np.sin(t2), s[:, 2:4], s[:, 4:6], d,
                                np.hypot(d[:, 0], d[:, 1])])

    def raw_state(self) -> np.ndarray:
        st = self.state
        return np.array([st.theta1, st.theta2, st.goal[0], st.goal[1], st.vel[0], st.vel[1]])

    def goal_observation(self) -> np.ndarray:
        """Observation of the arm at rest with its tip on the goal (IK branch
        nearest the episode's initial configuration)."""
        t1, t2 = self._goal_angles
        return self.observe(t1, t2, self.state.goal, np.zeros(2))

    def goal_observation_for(self, raw_state) -> np.ndarray:
        s = np.asarray(raw_state, dtype=np.float64)
        t1, t2 = inverse_kinematics(s[2:4], near=(s[0], s[1]))
        return self.observe(t1, t2, s[2:4], np.zeros(2))

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        t1, t2 = (wrap_angle(v) for v in rng.uniform(-np.pi, np.pi, size=2))
        radius = sum(LINKS) * np.sqrt(rng.uniform())
        angle = rng.uniform(-np.pi, np.pi)
        goal = np.array([radius * np.cos(angle), radius * np.sin(angle)])
        return self.set_state(t1, t2, goal)

    def set_state(self, theta1, theta2, goal) -> np.ndarray:
        self.state = ReacherState(wrap_angle(float(theta1)), wrap_angle(float(theta2)),
                                  np.asarray(goal, dtype=np.float64).copy(), np.zeros(2))
        self.t = 0
        self._goal_angles = inverse_kinematics(self.state.goal, near=(self.state.theta1, self.state.theta2))
        return self.observe(self.state.theta1, self.state.theta2, self.state.goal, self.state.vel)

    def step(self, action):
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (2,) or not np.all(np.isfinite(a)) or np.any(np.abs(a) > MAX_VEL + 1e-12):
            raise ValueError(f"reacher action must be two velocities in [-1, 1], got {action!r}")
        a = np.clip(a, -MAX_VEL, MAX_VEL)
        st = self.state
        self.state = ReacherState(wrap_angle(st.theta1 + DT * a[0]), wrap_angle(st.theta2 + DT * a[1]), st.goal, a)
        self.t += 1
        reached = self.is_success()
        done = reached or self.t >= self.horizon
        st = self.state
        return self.observe(st.theta1, st.theta2, st.goal, st.vel), (1.0 if reached else 0.0), done

    def is_success(self) -> bool:
        return float(np.linalg.norm(self.state.tip - self.state.goal)) < GOAL_RADIUS

    def random_action(self, rng: np.random.Generator):
        return rng.uniform(-MAX_VEL, MAX_VEL, size=2)
