from .gridworld import LAYOUTS, GridLayout, GridState, GridWorld, true_distance
from .pendulum import Pendulum, PendulumState, wrap_angle
from .reacher import Reacher, ReacherState, fingertip, inverse_kinematics
from .render import TEXTURES, TextureSpec, arm_mask, render_image, render_pendulum, texture_image
from .trajectories import Trajectory, TrajectorySet, collect_random_trajectories

ENV_IDS = ("gridworld", "pendulum", "reacher")
DEFAULT_HORIZON = {"gridworld": 100, "pendulum": 200, "reacher": 50}


def make_env(spec: dict):
    """Build an environment from a spec dict such as ``{"id": "gridworld", "layout": "umaze"}``."""
    env_id = spec.get("id")
    horizon = spec.get("horizon") or DEFAULT_HORIZON.get(env_id)
    if env_id == "gridworld":
        return GridWorld(spec.get("layout", "umaze"), goal=spec.get("goal"), horizon=horizon)
    if env_id == "pendulum":
        return Pendulum(horizon=horizon)
    if env_id == "reacher":
        return Reacher(horizon=horizon)
    raise ValueError(f"unknown env id {env_id!r}; expected one of {ENV_IDS}")


__all__ = [
    "DEFAULT_HORIZON", "ENV_IDS", "GridLayout", "GridState", "GridWorld", "LAYOUTS", "Pendulum", "PendulumState",
    "Reacher", "ReacherState", "TEXTURES", "TextureSpec", "Trajectory", "TrajectorySet", "arm_mask",
    "collect_random_trajectories", "fingertip", "inverse_kinematics", "make_env", "render_image",
    "render_pendulum", "texture_image", "true_distance", "wrap_angle",
]
