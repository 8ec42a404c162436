import csv
import json
from collections import deque
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.metrics import normalized_mutual_info_score

from pshape.cpc import CpcConfig, init_encoder_model
from pshape.envs import GridLayout, GridWorld, TextureSpec
from pshape.eval import (SuccessTable, angle_bins, compare_schemes, distance_correlation, first_crossing,
                         normalized_mutual_info, pearson, report_path, success_rate, texture_generalization,
                         write_csv, write_json)
from pshape.shaping import RewardScheme

OPEN_ROOM = ["#" * 11] + ["#" + "." * 9 + "#"] * 8 + ["#....G....#", "#" * 11]
MOVES = [(-1, 0), (1, 0), (0, -1), (0, 1)]


def flood(walls, src):
    dist = -np.ones(walls.shape, dtype=np.int64)
    dist[src] = 0
    q = deque([src])
    while q:
        r, c = q.popleft()
        for dr, dc in MOVES:
            n = (r + dr, c + dc)
            if not walls[n] and dist[n] < 0:
                dist[n] = dist[r, c] + 1
                q.append(n)
    return dist


class GreedyOracle:
    """Descends the BFS distance field toward the goal."""

    def __init__(self, env):
        self.env = env
        self.dist = flood(env.layout.walls, env.goal)

    def begin_episode(self, env, obs):
        return 0

    def observe_next(self, obs, which):
        return which

    def act(self, obs, rng=None, deterministic=True, which=0):
        r, c = self.env.state.agent
        return int(np.argmin([self.dist[r + dr, c + dc] if self.dist[r + dr, c + dc] >= 0 else 10 ** 6
                              for dr, dc in MOVES]))


class WallHugger(GreedyOracle):
    def act(self, obs, rng=None, deterministic=True, which=0):
        return 3  # always right; the U-Maze goal is in the leftmost free column, so it is never reached


# statistics ----------------------------------------------------------------------------
def test_pearson_examples():
    # hand: 5 / sqrt(2 * 114 / 9)
    assert pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(0.99340, abs=1e-5)
    assert pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(np.corrcoef([1, 2, 3], [2, 4, 7])[0, 1], abs=1e-12)
    assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [-1, -2, -3]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [1])


@given(hnp.arrays(np.float64, 12, elements=st.floats(-50, 50)), hnp.arrays(np.float64, 12, elements=st.floats(-50, 50)),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_symmetry_and_affine_invariance(x, y, a, b):
    if x.std() < 1e-3 or y.std() < 1e-3:
        return
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert pearson(y, x) == pytest.approx(r, abs=1e-9)
    assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)


@given(st.lists(st.integers(0, 4), min_size=2, max_size=60), st.data())
def test_nmi_matches_reference(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    assert normalized_mutual_info(a, b) == pytest.approx(normalized_mutual_info_score(a, b), abs=1e-9)


def test_nmi_edge_cases():
    assert normalized_mutual_info([0, 0, 1, 1], [5, 5, 7, 7]) == pytest.approx(1.0)
    assert normalized_mutual_info([0, 0], [1, 1]) == 1.0
    with pytest.raises(ValueError):
        normalized_mutual_info([0, 1], [0])


def test_angle_bins():
    np.testing.assert_array_equal(angle_bins([-math.pi, 0.0, math.pi - 1e-9, math.pi]), [0, 4, 7, 7])


# distance correlation ----------------------------------------------------------------------
def test_coordinate_encoder_open_room():
    layout = GridLayout(OPEN_ROOM)
    rep = distance_correlation(layout, lambda cells: cells.astype(float), 500, np.random.default_rng(0))
    assert rep.r > 0.9
    # self-consistency with the exported pairs
    assert rep.r == pytest.approx(pearson(rep.pairs[:, 0], rep.pairs[:, 1]), abs=1e-12)
    rows = list(rep.rows())
    assert len(rows) == 500
    for row in rows:
        if (row["cell_a_row"], row["cell_a_col"]) == (row["cell_b_row"], row["cell_b_col"]):
            assert row["true_distance"] == 0 and row["embedding_distance"] == 0.0
    assert set(rep.summary()) == {"pair_count", "pearson_r", "slope", "intercept"}


def test_encoder_model_path_and_degenerate():
    enc = init_encoder_model((867,), CpcConfig(embedding=4, context_size=3), np.random.default_rng(0))
    rep = distance_correlation("umaze", enc, 50, np.random.default_rng(1))
    assert -1.0 <= rep.r <= 1.0
    with pytest.raises(ValueError):
        distance_correlation("umaze", lambda cells: np.zeros((len(cells), 2)), 50, np.random.default_rng(1))


# success rate --------------------------------------------------------------------------------
def test_oracle_and_wall_policies():
    env = GridWorld("umaze")
    assert success_rate(GreedyOracle(env), env, 50, np.random.default_rng(0)) == 1.0
    env2 = GridWorld("umaze")
    assert success_rate(WallHugger(env2), env2, 50, np.random.default_rng(0)) == 0.0


def test_success_rate_deterministic():
    env = GridWorld("fourrooms")
    a = success_rate(GreedyOracle(env), env, 20, np.random.default_rng(5))
    b = success_rate(GreedyOracle(env), env, 20, np.random.default_rng(5))
    assert a == b == 1.0


def test_success_table():
    t = SuccessTable(100, [0, 1])
    t.add("umaze", "Sparse", 0.5)
    t.add("umaze", "Sparse", 1.0)
    assert t.mean("umaze", "Sparse") == 0.75
    with pytest.raises(ValueError):
        t.add("umaze", "Sparse", 1.5)
    (row,) = list(t.rows())
    assert row["min"] == 0.5 and row["max"] == 1.0


def test_first_crossing():
    assert first_crossing([10, 20, 30], [0.1, 0.6, 0.9], 0.5) == 20.0
    assert first_crossing([10, 20], [0.1, 0.2], 0.5) == math.inf


def test_compare_schemes_single_curve():
    ppo = dict(horizon=128, minibatch_size=64, epochs=1, total_steps=256, eval_episodes=2)
    out = compare_schemes({"id": "gridworld", "layout": "umaze"}, {"Sparse": lambda s: RewardScheme("Sparse")}, [0],
                          ppo, final_episodes=3)
    assert list(out["curves"]) == ["Sparse"]
    rows = out["curves"]["Sparse"]
    assert [r["env_steps"] for r in rows] == [128, 256]
    for r in rows:
        assert r["success_rate_min"] == r["success_rate_mean"] == r["success_rate_max"]
    s = out["summary"]["Sparse"]
    assert s["seeds"] == [0] and 0.0 <= s["final_success_mean"] <= 1.0


# texture generalization -----------------------------------------------------------------------
def _conv_encoder(seed=0):
    cfg = CpcConfig(encoder="conv", textures=["bricks"], conv_channels=[4, 4], embedding=6, context_size=3,
                    texture_seeds=1)
    return init_encoder_model((32, 32, 3), cfg, np.random.default_rng(seed))


def test_texture_identical_specs_agree():
    enc = _conv_encoder()
    states = np.column_stack([np.linspace(-3, 3, 40), np.zeros(40)])
    rep = texture_generalization(enc, TextureSpec("sand", 2), TextureSpec("sand", 2), states, 4,
                                 np.random.default_rng(0), restarts=2)
    assert rep["agreement"] == 1.0 and not rep["degenerate"]
    assert rep["nmi_train"] == rep["nmi_holdout"]


def test_texture_zero_encoder_degenerate():
    enc = _conv_encoder()
    for _, t in enc.params.items():
        t.data[...] = 0.0
    rep = texture_generalization(enc, TextureSpec("sand"), TextureSpec("wood"), np.zeros((5, 2)), 2,
                                 np.random.default_rng(0))
    assert rep["degenerate"]


# export ------------------------------------------------------------------------------------------
def test_export_roundtrip(tmp_path):
    assert report_path("out", "umaze", "correlation", 3) == "out/umaze_correlation_3.csv"
    p = tmp_path / "a.csv"
    write_csv(p, [{"x": 0.1, "y": 2}, {"x": 1 / 3, "y": 4}])
    rows = list(csv.DictReader(open(p)))
    assert float(rows[1]["x"]) == 1 / 3
    j = tmp_path / "a.json"
    write_json(j, {"v": np.float64(math.inf), "n": np.int64(3), "b": np.bool_(True), "l": (1.5,)})
    assert json.loads(j.read_text()) == {"v": None, "n": 3, "b": True, "l": [1.5]}
