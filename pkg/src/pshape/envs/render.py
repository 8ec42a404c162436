"""32x32 RGB rendering of pendulum / gridworld states over procedural textures."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SIZE = 32
TEXTURES = ("bricks", "sand", "cloth", "wood")
# foreground colors; blue-dominant so no background texture can imitate them
ARM_COLOR = np.array([0.05, 0.35, 1.0])
WALL_COLOR = np.array([0.0, 0.0, 0.0])
GOAL_COLOR = np.array([0.0, 0.9, 0.2])
AGENT_COLOR = np.array([0.05, 0.35, 1.0])
ARM_LENGTH = 13.0
ARM_HALF_WIDTH = 1.6


@dataclass(frozen=True)
class TextureSpec:
    tag: str
    seed: int = 0

    def __post_init__(self):
        if self.tag not in TEXTURES:
            raise ValueError(f"unknown texture {self.tag!r}; expected one of {TEXTURES}")


def _value_noise(rng: np.random.Generator, cells: int) -> np.ndarray:
    """Bilinearly upsampled random lattice in [0, 1]."""
    lattice = rng.uniform(size=(cells + 1, cells + 1))
    x = np.linspace(0, cells, SIZE, endpoint=False)
    i = x.astype(int)
    f = x - i
    a = lattice[i][:, i]
    b = lattice[i][:, i + 1]
    c = lattice[i + 1][:, i]
    d = lattice[i + 1][:, i + 1]
    fy, fx = f[:, None], f[None, :]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


@lru_cache(maxsize=256)
def _texture(tag: str, seed: int) -> np.ndarray:
    rng = np.random.default_rng([TEXTURES.index(tag), seed])
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    if tag == "bricks":
        h = int(rng.integers(5, 8))
        w = int(rng.integers(9, 13))
        row = (yy + rng.integers(h)) // h
        shift = (row % 2) * (w // 2)
        col = (xx + shift + rng.integers(w)) // w
        mortar = (((yy + rng.integers(h)) % h) == 0) | (((xx + shift) % w) == 0)
        base = np.array([0.62, 0.26, 0.16]) * rng.uniform(0.85, 1.15)
        tint = 0.85 + 0.3 * ((row * 7 + col * 13 + seed) % 5) / 4.0
        img = base[None, None, :] * tint[:, :, None]
        img[mortar] = np.array([0.72, 0.7, 0.66])
    elif tag == "sand":
        noise = 0.6 * rng.uniform(size=(SIZE, SIZE)) + 0.4 * _value_noise(rng, 16)
        base = np.array([0.82, 0.72, 0.48])
        img = base[None, None, :] * (0.75 + 0.4 * noise[:, :, None])
    elif tag == "cloth":
        f1, f2 = rng.uniform(0.5, 0.9, size=2)
        p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
        weave = 0.5 + 0.25 * np.sin(f1 * xx + p1) + 0.25 * np.sin(f2 * yy + p2)
        base = np.array([0.55, 0.6, 0.42]) * rng.uniform(0.85, 1.1)
        img = base[None, None, :] * (0.7 + 0.5 * weave[:, :, None])
    else:  # wood
        freq = rng.uniform(0.6, 1.0)
        warp = 3.0 * _value_noise(rng, 3)
        grain = 0.5 + 0.5 * np.sin(freq * (xx + warp * 2.0) + rng.uniform(0, 2 * np.pi))
        base = np.array([0.6, 0.38, 0.2]) * rng.uniform(0.85, 1.1)
        img = base[None, None, :] * (0.75 + 0.45 * grain[:, :, None])
    return np.clip(img, 0.0, 1.0)


def texture_image(texture: TextureSpec) -> np.ndarray:
    return _texture(texture.tag, int(texture.seed)).copy()


_PY, _PX = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64) + 0.5
_CENTER = SIZE / 2.0


def arm_mask(theta: float) -> np.ndarray:
    """Pixels covered by the pendulum arm; theta = 0 points straight up."""
    ex = np.sin(theta)
    ey = -np.cos(theta)
    dx, dy = _PX - _CENTER, _PY - _CENTER
    along = np.clip(dx * ex + dy * ey, 0.0, ARM_LENGTH)
    ox, oy = dx - along * ex, dy - along * ey
    return ox * ox + oy * oy <= ARM_HALF_WIDTH ** 2


def render_pendulum(theta: float, texture: TextureSpec) -> np.ndarray:
    img = _texture(texture.tag, int(texture.seed)).copy()
    img[arm_mask(theta)] = ARM_COLOR
    return img


def render_grid(layout, agent, goal, texture: TextureSpec) -> np.ndarray:
    img = _texture(texture.tag, int(texture.seed)).copy()
    idx = (np.arange(SIZE) * layout.height) // SIZE
    jdx = (np.arange(SIZE) * layout.width) // SIZE
    rr, cc = np.meshgrid(idx, jdx, indexing="ij")
    img[layout.walls[rr, cc]] = WALL_COLOR
    img[(rr == goal[0]) & (cc == goal[1])] = GOAL_COLOR
    img[(rr == agent[0]) & (cc == agent[1])] = AGENT_COLOR
    return img


def render_image(state, texture: TextureSpec, layout=None) -> np.ndarray:
    """Render a PendulumState or GridState to a (32, 32, 3) image in [0, 1]."""
    if hasattr(state, "theta"):
        return render_pendulum(state.theta, texture)
    if hasattr(state, "agent"):
        if layout is None:
            raise ValueError("gridworld rendering needs the layout")
        return render_grid(layout, state.agent, state.goal, texture)
    raise TypeError(f"cannot render state of type {type(state).__name__}")


def render_pendulum_batch(thetas, textures) -> np.ndarray:
    """Images for a batch of angles; ``textures`` is one spec per angle."""
    out = np.empty((len(thetas), SIZE, SIZE, 3))
    for i, (th, tex) in enumerate(zip(thetas, textures)):
        out[i] = render_pendulum(float(th), tex)
    return out
