from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParameterSet
from .tensor import Tensor, grad


def backward(loss: Tensor, params: ParameterSet) -> ParameterSet:
    """Gradient of a scalar loss for every parameter in ``params``.

    Parameters the loss does not reach get zero gradients.
    """
    names = params.names()
    gs = grad(loss, [params[n] for n in names])
    return ParameterSet(dict(zip(names, gs)), params.layout)


def global_norm(grads: ParameterSet) -> float:
    return float(np.sqrt(sum(float(np.sum(t.data * t.data)) for _, t in grads.items())))


def clip_by_global_norm(grads: ParameterSet, max_norm: float) -> float:
    """Scale gradients in place so their joint L2 norm is at most ``max_norm``.
    Returns the norm before clipping."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for _, t in grads.items():
            t.data *= scale
    return norm


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParameterSet, lr: float = 1e-3, **kw) -> "AdamState":
        st = cls(lr=lr, **kw)
        for name, t in params.items():
            st.m[name] = np.zeros_like(t.data)
            st.v[name] = np.zeros_like(t.data)
        return st


def adam_step(state: AdamState, params: ParameterSet, grads: ParameterSet) -> ParameterSet:
    """Bias-corrected Adam update applied in place to ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g.data)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    lr_t = state.lr / corr1
    for name, g in grads.items():
        gd = g.data
        m = state.m.setdefault(name, np.zeros_like(gd))
        v = state.v.setdefault(name, np.zeros_like(gd))
        m *= b1
        m += (1.0 - b1) * gd
        v *= b2
        v += (1.0 - b2) * (gd * gd)
        denom = np.sqrt(v * (1.0 / corr2))
        denom += state.eps
        np.divide(m, denom, out=denom)
        denom *= lr_t
        params[name].data -= denom
    return params
