"""Fixed architectures: dense MLP, two-layer strided conv encoder, GRU."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParameterSet
from .tensor import Tensor

_ACTIVATIONS = {"tanh": T.tanh, "linear": lambda x: x}


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# MLP -------------------------------------------------------------------------
def init_mlp(sizes, rng: np.random.Generator, activation: str = "tanh", activate_last: bool = False) -> ParameterSet:
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    tensors = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        tensors[f"l{i}.w"] = glorot(rng, a, b, (a, b))
        tensors[f"l{i}.b"] = np.zeros(b)
    layout = {"type": "mlp", "sizes": [int(s) for s in sizes], "activation": activation,
              "activate_last": bool(activate_last)}
    return ParameterSet(tensors, layout)


def mlp_forward(params: ParameterSet, x: Tensor) -> Tensor:
    """Dense layers with the layout's hidden activation; last layer linear
    unless the layout sets ``activate_last``. Accepts (in,) or (N, in)."""
    sizes = params.layout["sizes"]
    x = T.as_tensor(x)
    single = x.ndim == 1
    if x.shape[-1] != sizes[0] or x.ndim not in (1, 2):
        raise ValueError(f"mlp input shape mismatch: expected (N, {sizes[0]}) or ({sizes[0]},), got {x.shape}")
    h = x.reshape(1, sizes[0]) if single else x
    act = _ACTIVATIONS[params.layout.get("activation", "tanh")]
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        h = h @ params[f"l{i}.w"] + params[f"l{i}.b"]
        if i < n_layers - 1 or params.layout.get("activate_last", False):
            h = act(h)
    return h.reshape(sizes[-1]) if single else h


def mlp_apply(params: ParameterSet, x: np.ndarray) -> np.ndarray:
    """Gradient-free numpy evaluation of :func:`mlp_forward` (same arithmetic)."""
    sizes = params.layout["sizes"]
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != sizes[0]:
        raise ValueError(f"mlp input shape mismatch: expected last dim {sizes[0]}, got {x.shape}")
    tanh = params.layout.get("activation", "tanh") == "tanh"
    n_layers = len(sizes) - 1
    h = x
    for i in range(n_layers):
        h = h @ params[f"l{i}.w"].data + params[f"l{i}.b"].data
        if tanh and (i < n_layers - 1 or params.layout.get("activate_last", False)):
            h = np.tanh(h)
    return h


# Conv encoder -----------------------------------------------------------------
def _conv_out(n: int, k: int, s: int) -> int:
    return (n - k) // s + 1


def init_conv(input_shape, rng: np.random.Generator, channels=(16, 32), kernel: int = 3, stride: int = 2,
              out_size: int = 64) -> ParameterSet:
    h, w, c = input_shape
    tensors = {}
    cin = c
    for i, cout in enumerate(channels):
        fan_in, fan_out = kernel * kernel * cin, kernel * kernel * cout
        tensors[f"c{i}.w"] = glorot(rng, fan_in, fan_out, (kernel, kernel, cin, cout))
        tensors[f"c{i}.b"] = np.zeros(cout)
        h, w, cin = _conv_out(h, kernel, stride), _conv_out(w, kernel, stride), cout
    flat = h * w * cin
    tensors["proj.w"] = glorot(rng, flat, out_size, (flat, out_size))
    tensors["proj.b"] = np.zeros(out_size)
    layout = {"type": "conv", "input": [int(v) for v in input_shape], "channels": [int(v) for v in channels],
              "kernel": kernel, "stride": stride, "out": out_size}
    return ParameterSet(tensors, layout)


def conv_forward(params: ParameterSet, image: Tensor) -> Tensor:
    """Two 3x3 stride-2 tanh convolutions, flattened, projected to the embedding size.

    ``image`` is (H, W, C) or (N, H, W, C).
    """
    lay = params.layout
    image = T.as_tensor(image)
    single = image.ndim == 3
    x = image.reshape((1,) + image.shape) if single else image
    if x.ndim != 4:
        raise ValueError(f"conv input must be (H, W, C) or (N, H, W, C), got {image.shape}")
    k, s = lay["kernel"], lay["stride"]
    min_side = k
    for _ in lay["channels"][1:]:
        min_side = (min_side - 1) * s + k
    if x.shape[1] < min_side or x.shape[2] < min_side:
        raise ValueError(f"image {x.shape[1]}x{x.shape[2]} smaller than receptive field {min_side}x{min_side}")
    if list(x.shape[1:]) != lay["input"]:
        raise ValueError(f"conv input shape mismatch: expected {tuple(lay['input'])}, got {tuple(x.shape[1:])}")
    h = x
    for i in range(len(lay["channels"])):
        h = T.tanh(T.conv2d(h, params[f"c{i}.w"], s) + params[f"c{i}.b"])
    n = h.shape[0]
    h = h.reshape(n, int(np.prod(h.shape[1:])))
    out = h @ params["proj.w"] + params["proj.b"]
    return out.reshape(lay["out"]) if single else out


# GRU -------------------------------------------------------------------------
def init_gru(input_size: int, hidden_size: int, rng: np.random.Generator) -> ParameterSet:
    w_in = np.concatenate([glorot(rng, input_size, hidden_size, (input_size, hidden_size)) for _ in range(3)], axis=1)
    w_hid = np.concatenate([glorot(rng, hidden_size, hidden_size, (hidden_size, hidden_size)) for _ in range(3)], axis=1)
    tensors = {"w_in": w_in, "w_hid": w_hid, "b_in": np.zeros(3 * hidden_size), "b_hid": np.zeros(3 * hidden_size)}
    return ParameterSet(tensors, {"type": "gru", "input": int(input_size), "hidden": int(hidden_size)})


def gru_forward(cell: ParameterSet, inputs) -> Tensor:
    """Run the GRU from a zero state and return the final hidden state.

    Gate order in the packed weights is (reset, update, candidate)::

        r = sigmoid(x W_r + b_r + h U_r + c_r)
        u = sigmoid(x W_u + b_u + h U_u + c_u)
        n = tanh(x W_n + b_n + r * (h U_n + c_n))
        h' = (1 - u) * n + u * h

    ``inputs`` is a non-empty sequence of (input,) or (B, input) tensors, or a
    single (T, B, input) tensor.
    """
    if isinstance(inputs, Tensor):
        steps = inputs.shape[0]
        seq = inputs
    else:
        inputs = [T.as_tensor(x) for x in inputs]
        steps = len(inputs)
        seq = None
    if steps == 0:
        raise ValueError("gru_forward needs a non-empty input sequence")
    H, I = cell.layout["hidden"], cell.layout["input"]
    if seq is None:
        single = inputs[0].ndim == 1
        for x in inputs:
            if x.shape[-1] != I:
                raise ValueError(f"gru input size mismatch: expected {I}, got {x.shape[-1]}")
        seq = T.stack([x.reshape(1, I) if single else x for x in inputs], axis=0)
    else:
        single = False
        if seq.shape[-1] != I:
            raise ValueError(f"gru input size mismatch: expected {I}, got {seq.shape[-1]}")
    B = seq.shape[1]
    # input projections for all steps in one matmul
    xin = (seq.reshape(steps * B, I) @ cell["w_in"] + cell["b_in"]).reshape(steps, B, 3 * H)
    h = T.gru_recurrence(xin, cell["w_hid"], cell["b_hid"])
    return h.reshape(H) if single else h


def gru_forward_unfused(cell: ParameterSet, seq: Tensor) -> Tensor:
    """Step-by-step composition of primitive ops; reference for the fused node."""
    steps, B, I = seq.shape
    H = cell.layout["hidden"]
    xin = (seq.reshape(steps * B, I) @ cell["w_in"] + cell["b_in"]).reshape(steps, B, 3 * H)
    h = T.Tensor(np.zeros((B, H)))
    for t in range(steps):
        xt = xin[t]
        hh = h @ cell["w_hid"] + cell["b_hid"]
        r = T.sigmoid(xt[:, :H] + hh[:, :H])
        u = T.sigmoid(xt[:, H:2 * H] + hh[:, H:2 * H])
        n = T.tanh(xt[:, 2 * H:] + r * hh[:, 2 * H:])
        h = n + u * (h - n)
    return h


def gru_apply(cell: ParameterSet, seq: np.ndarray) -> np.ndarray:
    """Gradient-free GRU over a (T, B, input) array."""
    H = cell.layout["hidden"]
    steps, B, I = seq.shape
    xin = (seq.reshape(steps * B, I) @ cell["w_in"].data + cell["b_in"].data).reshape(steps, B, 3 * H)
    w_hid, b_hid = cell["w_hid"].data, cell["b_hid"].data
    h = np.zeros((B, H))
    for t in range(steps):
        xt = xin[t]
        hh = h @ w_hid + b_hid
        r = 0.5 * (1.0 + np.tanh(0.5 * (xt[:, :H] + hh[:, :H])))
        u = 0.5 * (1.0 + np.tanh(0.5 * (xt[:, H:2 * H] + hh[:, H:2 * H])))
        n = np.tanh(xt[:, 2 * H:] + r * hh[:, 2 * H:])
        h = n + u * (h - n)
    return h
