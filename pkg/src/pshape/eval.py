"""Evaluation harness: embedding/maze-distance correlation, success tables,
scheme comparisons and texture generalization, with CSV/JSON export."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clustering import kmeans_fit
from .envs import GridWorld, make_env, render_pendulum, true_distance


# statistics -----------------------------------------------------------------
def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx <= 0.0 or syy <= 0.0:
        raise ValueError("pearson is undefined for zero-variance input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def normalized_mutual_info(a, b) -> float:
    """NMI with arithmetic-mean normalization; 1.0 when both labelings are constant."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label arrays must have equal length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    joint = np.zeros((len(ua), len(ub)))
    np.add.at(joint, (ia, ib), 1.0)
    ha, hb = _entropy(joint.sum(axis=1)), _entropy(joint.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    mi = ha + hb - _entropy(joint.ravel())
    denom = 0.5 * (ha + hb)
    return float(max(0.0, mi) / denom) if denom > 0 else 0.0


# distance correlation ------------------------------------------------------
@dataclass
class CorrelationReport:
    pair_count: int
    r: float
    slope: float
    intercept: float
    pairs: np.ndarray  # (N, 2): true distance, embedding distance
    cells: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))

    def rows(self):
        for (a0, a1, b0, b1), (d, e) in zip(self.cells, self.pairs):
            yield {"cell_a_row": int(a0), "cell_a_col": int(a1), "cell_b_row": int(b0), "cell_b_col": int(b1),
                   "true_distance": int(d), "embedding_distance": float(e)}

    def summary(self) -> dict:
        return {"pair_count": self.pair_count, "pearson_r": self.r, "slope": self.slope, "intercept": self.intercept}


def distance_correlation(layout, encoder, pair_count: int, rng: np.random.Generator) -> CorrelationReport:
    """Correlate A* maze distance with L2 embedding distance over random cell pairs.

    ``encoder`` is a trained EncoderModel, or any callable mapping an (N, 2)
    array of cells to (N, d) embeddings.
    """
    env = GridWorld(layout)
    cells = np.array(env.layout.free_cells)
    if callable(encoder) and not hasattr(encoder, "params"):
        emb = np.asarray(encoder(cells), dtype=np.float64)
    else:
        from .cpc import encode_states

        emb = encode_states(encoder, env.observe_states(cells))
    ia = rng.integers(len(cells), size=pair_count)
    ib = rng.integers(len(cells), size=pair_count)
    true = np.array([true_distance(env.layout, cells[i], cells[j]) for i, j in zip(ia, ib)], dtype=np.float64)
    dist = np.linalg.norm(emb[ia] - emb[ib], axis=1)
    r = pearson(true, dist)
    slope, intercept = np.polyfit(true, dist, 1)
    return CorrelationReport(pair_count, r, float(slope), float(intercept), np.column_stack([true, dist]),
                             np.column_stack([cells[ia], cells[ib]]))


# success tables ---------------------------------------------------------------
@dataclass
class SuccessTable:
    episodes: int
    seeds: list
    rates: dict = field(default_factory=dict)  # (layout, scheme) -> list of per-seed fractions

    def add(self, layout: str, scheme: str, rate: float) -> None:
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"success rate {rate} outside [0, 1]")
        self.rates.setdefault((layout, scheme), []).append(float(rate))

    def mean(self, layout: str, scheme: str) -> float:
        return float(np.mean(self.rates[(layout, scheme)]))

    def rows(self):
        for (layout, scheme), vals in sorted(self.rates.items()):
            yield {"layout": layout, "scheme": scheme, "mean": float(np.mean(vals)), "min": float(np.min(vals)),
                   "max": float(np.max(vals)), "per_seed": " ".join(repr(v) for v in vals)}


def success_rate(agent, env, episodes: int, rng: np.random.Generator) -> float:
    """Deterministic-policy success fraction under the environment's own reward."""
    from .rl import success_rate as _sr

    return _sr(agent, env, episodes, rng)


# scheme comparison --------------------------------------------------------------
def _run_one(job: dict) -> dict:
    from .rl import PpoConfig, success_rate as _sr, train_policy

    env = make_env(job["env"])
    rng = np.random.default_rng(job["seed"])
    agent, curve = train_policy(env, job["scheme"], PpoConfig(**job["ppo"]), rng, job.get("featurizer"))
    final = _sr(agent, make_env(job["env"]), job["final_episodes"], np.random.default_rng([job["seed"], 7919]))
    return {"name": job["name"], "seed": job["seed"], "curve": curve, "final_success": final, "agent": agent}


def first_crossing(steps, values, level: float) -> float:
    """Env steps at which ``values`` first reaches ``level``; inf if never."""
    for s, v in zip(steps, values):
        if v >= level:
            return float(s)
    return math.inf


def compare_schemes(env_spec: dict, schemes: dict, seeds, ppo: dict, final_episodes: int = 100,
                    featurizers: dict | None = None, workers: int = 1) -> dict:
    """Train every (scheme, seed) pair and aggregate aligned learning curves.

    ``schemes`` maps a display name to a factory ``seed -> RewardScheme``.
    Returns ``{"curves": {name: rows}, "summary": {name: stats}, "runs": [...]}``
    where each curve row holds the mean, min and max across seeds.
    """
    jobs = []
    for name, factory in schemes.items():
        for seed in seeds:
            fz = (featurizers or {}).get(name)
            jobs.append({"name": name, "seed": int(seed), "scheme": factory(int(seed)), "env": env_spec,
                         "ppo": dict(ppo), "final_episodes": final_episodes,
                         "featurizer": fz(int(seed)) if fz else None})
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    curves, summary = {}, {}
    for name in schemes:
        mine = [r for r in runs if r["name"] == name]
        n = min(len(r["curve"]) for r in mine)
        rows = []
        for i in range(n):
            row = {"env_steps": mine[0]["curve"][i]["env_steps"]}
            for key in ("success_rate", "mean_env_return"):
                vals = np.array([r["curve"][i][key] for r in mine], dtype=np.float64)
                ok = vals[np.isfinite(vals)]
                row[f"{key}_mean"] = float(ok.mean()) if len(ok) else math.nan
                row[f"{key}_min"] = float(ok.min()) if len(ok) else math.nan
                row[f"{key}_max"] = float(ok.max()) if len(ok) else math.nan
            rows.append(row)
        curves[name] = rows
        finals = [r["final_success"] for r in mine]
        summary[name] = {
            "seeds": [r["seed"] for r in mine], "final_success": finals,
            "final_success_mean": float(np.mean(finals)),
            "steps_to_half_success": first_crossing([r["env_steps"] for r in rows],
                                                    [r["success_rate_mean"] for r in rows], 0.5),
        }
    return {"curves": curves, "summary": summary, "runs": runs}


# texture generalization --------------------------------------------------------
ANGLE_BINS = 8


def angle_bins(thetas, bins: int = ANGLE_BINS) -> np.ndarray:
    t = (np.asarray(thetas, dtype=np.float64) + np.pi) / (2.0 * np.pi)
    return np.clip((t * bins).astype(np.int64), 0, bins - 1)


def texture_generalization(encoder, texture_train, texture_holdout, states, k: int, rng: np.random.Generator,
                           restarts: int = 10) -> dict:
    """Cluster agreement and angle consistency across two backgrounds.

    The same pendulum states are rendered over both textures; k-means is fit
    on the training-texture embeddings and both embedding sets are assigned
    to those centroids.
    """
    from .cpc import encode_states

    states = np.asarray(states, dtype=np.float64).reshape(len(states), -1)
    thetas = states[:, 0]
    img_a = np.stack([render_pendulum(float(t), texture_train) for t in thetas])
    img_b = np.stack([render_pendulum(float(t), texture_holdout) for t in thetas])
    za, zb = encode_states(encoder, img_a), encode_states(encoder, img_b)
    var = float(za.var(axis=0).sum())
    report = {"train_texture": texture_train.tag, "holdout_texture": texture_holdout.tag, "k": k,
              "states": len(states), "embedding_variance": var, "degenerate": var < 1e-6}
    if report["degenerate"]:
        report.update(agreement=1.0, nmi_train=0.0, nmi_holdout=0.0)
        return report
    model = kmeans_fit(za, k, rng, restarts=restarts)
    la, lb = model.assign(za), model.assign(zb)
    bins = angle_bins(thetas)
    report.update(agreement=float(np.mean(la == lb)), nmi_train=normalized_mutual_info(la, bins),
                  nmi_holdout=normalized_mutual_info(lb, bins),
                  mean_embedding_shift=float(np.mean(np.linalg.norm(za - zb, axis=1))))
    return report


# export ------------------------------------------------------------------------
def report_path(out_dir, env_name: str, experiment: str, seed, ext: str = "csv") -> str:
    return os.path.join(out_dir, f"{env_name}_{experiment}_{seed}.{ext}")


def write_csv(path, rows, columns=None) -> None:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
