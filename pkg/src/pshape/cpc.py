"""Contrastive predictive coding over stored exploration trajectories.

A shared encoder maps each state to an embedding z. A GRU summarizes the
embeddings of ``n`` context states into c_t, and one bilinear matrix per
offset k scores candidate future embeddings: ``l = z_{t+k} W_k c_t``. The
InfoNCE objective is softmax cross-entropy over the positive future embedding
and the same-offset embeddings of the other segments in the batch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffnet as dn
from .diffnet import tensor as T
from .envs import TextureSpec, make_env, render_pendulum
from .envs.trajectories import TrajectorySet

log = logging.getLogger(__name__)


@dataclass
class CpcConfig:
    context: int = 10
    predict: int = 10
    batch_size: int = 8
    epochs: int = 2
    lr: float = 1e-3
    embedding: int = 64
    context_size: int = 256
    negatives: str = "in-batch"
    encoder: str = "mlp"  # "mlp" for state vectors, "conv" for rendered images
    conv_channels: list = field(default_factory=lambda: [16, 32])
    textures: list = field(default_factory=list)  # image mode: training texture tags
    texture_seeds: int = 8
    trajectories: int = 200
    trajectory_length: int = 100
    max_batches: int | None = None  # optional cap on total optimizer steps

    def __post_init__(self):
        if self.context < 1 or self.predict < 1:
            raise ValueError("context and predict lengths must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (need at least one negative)")
        if self.negatives != "in-batch":
            raise ValueError(f"unsupported negative-sampling mode {self.negatives!r}")
        if self.encoder not in ("mlp", "conv"):
            raise ValueError(f"encoder must be 'mlp' or 'conv', got {self.encoder!r}")
        if self.encoder == "conv" and not self.textures:
            raise ValueError("conv encoder needs at least one training texture")

    @property
    def segment_length(self) -> int:
        return self.context + self.predict


# observations -------------------------------------------------------------------
class Observer:
    """Turns raw trajectory states into encoder inputs.

    State mode flattens ``env.observe_states``; image mode renders pendulum
    angles over a texture drawn independently per frame from the training
    tags (and ``texture_seeds`` seeds each), so the background carries no
    information about the future.
    """

    def __init__(self, env_spec: dict, config: CpcConfig):
        self.env = make_env(env_spec)
        self.image = config.encoder == "conv"
        if self.image:
            if self.env.env_id != "pendulum":
                raise ValueError("image observations are implemented for the pendulum")
            self.textures = [TextureSpec(tag, s) for tag in config.textures for s in range(config.texture_seeds)]
            self.obs_shape = (32, 32, 3)
        else:
            self.obs_shape = (self.env.obs_dim,)

    def __call__(self, states: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        if not self.image:
            return self.env.observe_states(states)
        rng = rng if rng is not None else np.random.default_rng(0)
        picks = rng.integers(len(self.textures), size=len(states))
        return np.stack([render_pendulum(float(s[0]), self.textures[p]) for s, p in zip(states, picks)])


# model ------------------------------------------------------------------------
@dataclass
class EncoderModel:
    params: dn.ParameterSet
    config: CpcConfig
    obs_shape: tuple
    env_spec: dict = field(default_factory=dict)

    @property
    def encoder(self) -> dn.ParameterSet:
        return self.params.sub("encoder")

    @property
    def gru(self) -> dn.ParameterSet:
        return self.params.sub("gru")

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"config": asdict(self.config), "obs_shape": list(self.obs_shape), "env": self.env_spec}
        meta.update(extra or {})
        self.params.save(path, "cpc-encoder", meta)

    @classmethod
    def load(cls, path) -> "EncoderModel":
        params, meta = dn.ParameterSet.load(path, "cpc-encoder")
        return cls(params, CpcConfig(**meta["config"]), tuple(meta["obs_shape"]), meta.get("env", {}))


def init_encoder_model(obs_shape, config: CpcConfig, rng: np.random.Generator, env_spec: dict | None = None
                       ) -> EncoderModel:
    obs_shape = tuple(obs_shape)
    if config.encoder == "conv":
        enc = dn.init_conv(obs_shape, rng, channels=config.conv_channels, out_size=config.embedding)
    else:
        enc = dn.init_mlp([int(np.prod(obs_shape)), 64, config.embedding], rng)
    gru = dn.init_gru(config.embedding, config.context_size, rng)
    E, H, K = config.embedding, config.context_size, config.predict
    w = np.stack([dn.glorot(rng, E, H, (E, H)) for _ in range(K)])
    score = dn.ParameterSet({"W": w}, {"type": "bilinear", "offsets": K, "embedding": E, "context": H})
    params = dn.ParameterSet.merge({"encoder": enc, "gru": gru, "score": score})
    return EncoderModel(params, config, obs_shape, dict(env_spec or {}))


def _encode_tensor(model: EncoderModel, obs: T.Tensor) -> T.Tensor:
    enc = model.encoder
    if enc.layout["type"] == "conv":
        return dn.conv_forward(enc, obs)
    return dn.mlp_forward(enc, obs.reshape(obs.shape[0], -1))


def encode_states(model: EncoderModel, observations) -> np.ndarray:
    """Embeddings for a batch of observations, shape (N, embedding)."""
    obs = np.asarray(observations, dtype=np.float64)
    shape = tuple(model.obs_shape)
    enc = model.encoder
    if enc.layout["type"] == "conv":
        if obs.shape[1:] != shape:
            raise ValueError(f"observation shape mismatch: expected (N, {shape}), got {obs.shape}")
        return dn.conv_forward(enc, T.Tensor(obs)).data
    flat = int(np.prod(shape))
    if obs.ndim < 2 or int(np.prod(obs.shape[1:])) != flat:
        raise ValueError(f"observation shape mismatch: expected (N, {flat}), got {obs.shape}")
    return dn.mlp_apply(enc, obs.reshape(len(obs), flat))


def encode_state(model: EncoderModel, observation) -> np.ndarray:
    """Embedding z of one observation."""
    obs = np.asarray(observation, dtype=np.float64)
    shape = tuple(model.obs_shape)
    if obs.shape != shape and obs.size != int(np.prod(shape)):
        raise ValueError(f"observation shape mismatch: expected {shape}, got {obs.shape}")
    return encode_states(model, obs.reshape((1,) + shape))[0]


def encode_context(model: EncoderModel, observations) -> np.ndarray:
    """GRU summary c_t of exactly ``config.context`` consecutive observations."""
    obs = np.asarray(observations, dtype=np.float64)
    if len(obs) != model.config.context:
        raise ValueError(f"context needs {model.config.context} observations, got {len(obs)}")
    z = encode_states(model, obs)
    return dn.gru_apply(model.gru, z[:, None, :])[0]


# segments and loss ----------------------------------------------------------------
@dataclass
class SegmentBatch:
    traj_index: np.ndarray
    start: np.ndarray
    context: np.ndarray  # (B, n, *obs_shape)
    target: np.ndarray   # (B, K, *obs_shape)

    @property
    def size(self) -> int:
        return len(self.start)


def valid_trajectories(trajectories: TrajectorySet, config: CpcConfig) -> list[int]:
    need = config.segment_length
    ok = [i for i, t in enumerate(trajectories.trajectories) if len(t) >= need]
    skipped = len(trajectories) - len(ok)
    if skipped:
        log.warning("skipping %d trajectories shorter than %d states", skipped, need)
    if not ok:
        raise ValueError(f"no trajectory has at least {need} states (context {config.context} + "
                         f"predict {config.predict})")
    return ok


def count_segments(trajectories: TrajectorySet, config: CpcConfig) -> int:
    need = config.segment_length
    return sum(len(t) - need + 1 for t in trajectories.trajectories if len(t) >= need)


def sample_segments(trajectories: TrajectorySet, config: CpcConfig, rng: np.random.Generator,
                    observer: Observer | None = None, valid: list[int] | None = None) -> SegmentBatch:
    """B segments, each from a uniformly chosen long-enough trajectory and a
    uniformly chosen start index within it."""
    valid = valid if valid is not None else valid_trajectories(trajectories, config)
    observer = observer or Observer(trajectories.env_spec, config)
    B, n, K = config.batch_size, config.context, config.predict
    need = n + K
    picks = np.asarray(valid)[rng.integers(len(valid), size=B)]
    starts = np.array([rng.integers(len(trajectories.trajectories[i]) - need + 1) for i in picks])
    states = np.concatenate([trajectories.trajectories[i].states[s:s + need] for i, s in zip(picks, starts)])
    obs = observer(states, rng).reshape((B, need) + observer.obs_shape)
    return SegmentBatch(picks, starts, obs[:, :n], obs[:, n:])


def contrastive_cross_entropy(logits: T.Tensor) -> T.Tensor:
    """Mean cross-entropy of (G, B, B) score blocks whose positives sit on the diagonal."""
    logits = T.as_tensor(logits)
    G, B, _ = logits.shape
    ls = T.log_softmax(logits, axis=2)
    return -(ls * np.eye(B)[None]).sum() * (1.0 / (G * B))


def infonce_loss(model: EncoderModel, batch: SegmentBatch) -> T.Tensor:
    cfg = model.config
    B, n, K = batch.size, cfg.context, cfg.predict
    if B < 2:
        raise ValueError("InfoNCE needs a batch of at least 2 segments")
    E, H = cfg.embedding, cfg.context_size
    obs = np.concatenate([batch.context, batch.target], axis=1)
    obs = obs.reshape((B * (n + K),) + obs.shape[2:])
    z = _encode_tensor(model, T.Tensor(obs)).reshape(B, n + K, E)
    c = dn.gru_forward(model.gru, T.transpose(z[:, :n, :], (1, 0, 2)))  # (B, H)
    w = model.params["score.W"]  # (K, E, H)
    w_cat = T.transpose(w, (2, 0, 1)).reshape(H, K * E)
    pred = T.transpose((c @ w_cat).reshape(B, K, E), (1, 0, 2))  # (K, B, E): W_k c_i
    targets = T.transpose(z[:, n:, :], (1, 2, 0))  # (K, E, B)
    logits = T.bmm(pred, targets)  # (K, B, B): [k, i, j] = z_j W_k c_i
    return contrastive_cross_entropy(logits)


# training -----------------------------------------------------------------------
def train_cpc(trajectories: TrajectorySet, config: CpcConfig, rng: np.random.Generator,
              model: EncoderModel | None = None, progress=None) -> tuple[EncoderModel, list[float]]:
    """Adam over encoder, GRU and score matrices.

    One epoch is ``count_segments // batch_size`` batches. Returns the model
    and the per-batch loss history.
    """
    if len(trajectories) == 0:
        raise ValueError("trajectory set is empty")
    observer = Observer(trajectories.env_spec, config)
    valid = valid_trajectories(trajectories, config)
    if model is None:
        model = init_encoder_model(observer.obs_shape, config, rng, trajectories.env_spec)
    opt = dn.AdamState.for_params(model.params, lr=config.lr)
    per_epoch = max(1, count_segments(trajectories, config) // config.batch_size)
    total = per_epoch * config.epochs
    if config.max_batches is not None:
        total = min(total, config.max_batches)
    history: list[float] = []
    for step in range(total):
        batch = sample_segments(trajectories, config, rng, observer, valid)
        loss = infonce_loss(model, batch)
        value = loss.item()
        if not math.isfinite(value):
            raise FloatingPointError(f"CPC loss became {value} at batch {step}; last losses {history[-5:]}")
        grads = dn.backward(loss, model.params)
        dn.adam_step(opt, model.params, grads)
        history.append(value)
        if progress is not None and (step + 1) % 200 == 0:
            progress(step + 1, total, float(np.mean(history[-200:])))
    return model, history


def smoothed(history, frac: float = 0.1) -> tuple[float, float]:
    """Mean loss over the first and last ``frac`` of the history."""
    h = np.asarray(history)
    m = max(1, int(len(h) * frac))
    return float(h[:m].mean()), float(h[-m:].mean())
