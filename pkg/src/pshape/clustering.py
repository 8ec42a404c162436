"""k-means over state embeddings, goal-cluster lookup and plot export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .diffnet import container


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (k, embedding)
    inertia: float
    goal_id: int | None = None
    history: list = field(default_factory=list)  # inertia after each Lloyd iteration of the best run

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or len(self.centroids) < 1:
            raise ValueError("centroids must be a non-empty (k, d) array")
        if self.goal_id is not None and not 0 <= self.goal_id < self.k:
            raise ValueError(f"goal cluster id {self.goal_id} outside [0, {self.k})")

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, embeddings) -> np.ndarray:
        """Nearest-centroid labels for a batch of embeddings."""
        x = np.asarray(embeddings, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected embeddings of shape (N, {self.dim}), got {x.shape}")
        return kernels.nearest_centroid(x, self.centroids)[0]

    def save(self, path, meta: dict | None = None) -> None:
        header = {"k": self.k, "inertia": self.inertia, "goal_id": self.goal_id, "history": self.history}
        header.update(meta or {})
        container.save(path, "clusters", {"centroids": self.centroids}, header)

    @classmethod
    def load(cls, path) -> "ClusterModel":
        meta, arrays = container.load(path, "clusters")
        return cls(arrays["centroids"], float(meta["inertia"]), meta.get("goal_id"), list(meta.get("history", [])))


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    idx = [int(rng.integers(len(x)))]
    d2 = np.sum((x - x[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise ValueError(f"fewer than k={k} distinct points")
        j = int(rng.choice(len(x), p=d2 / total))
        idx.append(j)
        d2 = np.minimum(d2, np.sum((x - x[j]) ** 2, axis=1))
    return x[idx].copy()


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iters: int):
    labels, d2 = kernels.nearest_centroid(x, centroids)
    history = [float(d2.sum())]
    for _ in range(max_iters):
        for j in range(len(centroids)):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-served point
                far = int(np.argmax(d2))
                centroids[j] = x[far]
                d2[far] = 0.0
        new_labels, d2 = kernels.nearest_centroid(x, centroids)
        history.append(float(d2.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, history


def kmeans_fit(embeddings, k: int, rng: np.random.Generator, restarts: int = 10, max_iters: int = 300
               ) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` runs by inertia."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {x.shape}")
    if k < 1:
        raise ValueError("k must be positive")
    if len(x) < k:
        raise ValueError(f"need at least k={k} points, got {len(x)}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for _ in range(restarts):
        c, hist = _lloyd(x, _plusplus(x, k, rng), max_iters)
        if best is None or hist[-1] < best[1][-1]:
            best = (c, hist)
    c, hist = best
    return ClusterModel(c, hist[-1], None, hist)


def assign_cluster(model: ClusterModel, embedding) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    z = np.asarray(embedding, dtype=np.float64)
    if z.shape != (model.dim,):
        raise ValueError(f"embedding must have shape ({model.dim},), got {z.shape}")
    return int(model.assign(z[None])[0])


def identify_goal_cluster(model: ClusterModel, encoder, goal_observation) -> ClusterModel:
    """Copy of ``model`` with the goal id set to the cluster of the goal's embedding."""
    from .cpc import encode_state

    gid = assign_cluster(model, encode_state(encoder, goal_observation))
    return replace(model, goal_id=gid, history=list(model.history))


def sample_states(trajectories, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` raw states drawn uniformly (with replacement) from stored trajectories."""
    pool = trajectories.all_states()
    return pool[rng.integers(len(pool), size=count)]


def pca_2d(embeddings) -> np.ndarray:
    """Projection onto the first two principal components (zero-padded if rank < 2)."""
    x = np.asarray(embeddings, dtype=np.float64)
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    # fix the sign so the output does not depend on the LAPACK build
    vt = vt[:2]
    signs = np.sign(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)])
    out = np.zeros((len(x), 2))
    out[:, :len(vt)] = x @ (vt * signs[:, None]).T
    return out


def export_csv(path, states, embeddings, labels, state_names=None) -> None:
    """Rows of (state coords..., cluster, pc1, pc2) for plotting."""
    states = np.asarray(states, dtype=np.float64).reshape(len(labels), -1)
    proj = pca_2d(embeddings)
    names = state_names or [f"s{i}" for i in range(states.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + ["cluster", "pc1", "pc2"])
        for s, lab, p in zip(states, labels, proj):
            w.writerow([repr(float(v)) for v in s] + [int(lab), repr(float(p[0])), repr(float(p[1]))])
