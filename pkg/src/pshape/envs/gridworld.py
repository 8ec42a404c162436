"""17x17 maze navigation with a sparse goal reward."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .. import kernels

LAYOUTS = ("umaze", "fourrooms", "blockmaze")
# up, down, left, right
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


class GridLayout:
    """Wall mask plus fixed goal cell, parsed from an ASCII map.

    ``#`` is a wall, ``.`` free, ``G`` the (free) goal cell.
    """

    def __init__(self, rows: list[str], tag: str = "custom"):
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValueError("layout rows must be non-empty and equal length")
        self.tag = tag
        self.height, self.width = len(rows), len(rows[0])
        self.walls = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
        goals = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "G"]
        if len(goals) > 1:
            raise ValueError("layout has more than one goal cell")
        self.goal = goals[0] if goals else None
        border = np.concatenate([self.walls[0], self.walls[-1], self.walls[:, 0], self.walls[:, -1]])
        if not border.all():
            raise ValueError("layout border cells must all be walls")
        self.free_cells = [(int(r), int(c)) for r, c in zip(*np.nonzero(~self.walls))]
        if not self.free_cells:
            raise ValueError("layout has no free cells")
        dist = kernels.bfs_distances(~self.walls, *self.free_cells[0])
        if (dist[~self.walls] < 0).any():
            raise ValueError("layout has free cells unreachable from each other")
        self._fields: dict = {}

    @classmethod
    def named(cls, tag: str) -> "GridLayout":
        if tag not in LAYOUTS:
            raise ValueError(f"unknown layout {tag!r}; expected one of {LAYOUTS}")
        text = resources.files("pshape.envs").joinpath(f"layouts/{tag}.txt").read_text()
        return cls([line for line in text.splitlines() if line.strip()], tag)

    def is_free(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width and not self.walls[r, c]

    def to_ascii(self) -> str:
        lines = []
        for r in range(self.height):
            lines.append("".join("#" if self.walls[r, c] else ("G" if (r, c) == self.goal else ".")
                                 for c in range(self.width)))
        return "\n".join(lines)

    def distance_field(self, cell) -> np.ndarray:
        """BFS distances from ``cell`` to every cell (-1 on walls); cached."""
        cell = (int(cell[0]), int(cell[1]))
        if cell not in self._fields:
            self._fields[cell] = kernels.bfs_distances(~self.walls, *cell)
        return self._fields[cell]


def true_distance(layout: GridLayout, a, b) -> int:
    """Shortest 4-connected path length between free cells, by A* with the
    Manhattan heuristic."""
    a, b = (int(a[0]), int(a[1])), (int(b[0]), int(b[1]))
    for cell in (a, b):
        if not layout.is_free(cell):
            raise ValueError(f"cell {cell} is a wall or outside the maze")
    if a == b:
        return 0
    best = {a: 0}
    frontier = [(abs(a[0] - b[0]) + abs(a[1] - b[1]), 0, a)]
    while frontier:
        _, g, cur = heapq.heappop(frontier)
        if cur == b:
            return g
        if g > best.get(cur, g):
            continue
        for dr, dc in MOVES:
            nxt = (cur[0] + dr, cur[1] + dc)
            if layout.walls[nxt]:
                continue
            ng = g + 1
            if ng < best.get(nxt, 1 << 30):
                best[nxt] = ng
                heapq.heappush(frontier, (ng + abs(nxt[0] - b[0]) + abs(nxt[1] - b[1]), ng, nxt))
    raise ValueError(f"no path between {a} and {b}")


@dataclass
class GridState:
    agent: tuple
    goal: tuple


class GridWorld:
    """Discrete maze; observation is (H, W, 3) = wall, goal and agent layers."""

    env_id = "gridworld"
    n_actions = 4
    discrete = True

    def __init__(self, layout="umaze", goal=None, horizon: int = 100):
        self.layout = layout if isinstance(layout, GridLayout) else GridLayout.named(layout)
        goal = goal if goal is not None else self.layout.goal
        if goal is None or not self.layout.is_free(goal):
            raise ValueError(f"goal {goal} must be a free cell")
        self.goal = (int(goal[0]), int(goal[1]))
        self.horizon = horizon
        self.obs_shape = (self.layout.height, self.layout.width, 3)
        self.obs_dim = int(np.prod(self.obs_shape))
        self.action_shape = ()
        self._spawn_cells = [c for c in self.layout.free_cells if c != self.goal]
        self._base = np.zeros(self.obs_shape)
        self._base[:, :, 0] = self.layout.walls
        self._base[self.goal[0], self.goal[1], 1] = 1.0
        self.state: GridState | None = None
        self.t = 0

    def spec(self) -> dict:
        return {"id": self.env_id, "layout": self.layout.tag, "goal": list(self.goal), "horizon": self.horizon}

    # observations -----------------------------------------------------------
    def observe_cell(self, cell) -> np.ndarray:
        obs = self._base.copy()
        obs[cell[0], cell[1], 2] = 1.0
        return obs

    def observe_states(self, states: np.ndarray) -> np.ndarray:
        """Flattened observations for an array of (row, col) states."""
        states = np.asarray(states).reshape(-1, 2).astype(np.int64)
        out = np.broadcast_to(self._base.reshape(-1), (len(states), self.obs_dim)).copy()
        flat = (states[:, 0] * self.layout.width + states[:, 1]) * 3 + 2
        out[np.arange(len(states)), flat] = 1.0
        return out

    def goal_observation(self) -> np.ndarray:
        return self.observe_cell(self.goal).reshape(-1)

    def raw_state(self) -> np.ndarray:
        return np.array(self.state.agent, dtype=np.float64)

    def goal_observation_for(self, raw_state) -> np.ndarray:
        return self.goal_observation()

    # dynamics ---------------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        cell = self._spawn_cells[int(rng.integers(len(self._spawn_cells)))]
        self.state = GridState(cell, self.goal)
        self.t = 0
        return self.observe_cell(cell).reshape(-1)

    def place(self, cell) -> np.ndarray:
        if not self.layout.is_free(cell):
            raise ValueError(f"cell {cell} is not free")
        self.state = GridState((int(cell[0]), int(cell[1])), self.goal)
        self.t = 0
        return self.observe_cell(cell).reshape(-1)

    def step(self, action):
        a = int(action)
        if a != action or not 0 <= a < 4:
            raise ValueError(f"gridworld action must be an integer in 0..3, got {action!r}")
        r, c = self.state.agent
        dr, dc = MOVES[a]
        if not self.layout.walls[r + dr, c + dc]:
            r, c = r + dr, c + dc
        self.state = GridState((r, c), self.goal)
        self.t += 1
        at_goal = (r, c) == self.goal
        done = at_goal or self.t >= self.horizon
        return self.observe_cell((r, c)).reshape(-1), (1.0 if at_goal else 0.0), done

    def is_success(self) -> bool:
        return self.state.agent == self.goal

    def random_action(self, rng: np.random.Generator):
        return int(rng.integers(4))
