"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a new :class:`Tensor` holding the result and, when any
input requires gradients, a closure mapping the output gradient to input
gradients. :func:`backward` walks the recorded graph in reverse topological
order. Tensors are never mutated by differentiation; gradients are returned.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(as_tensor(other), power(self, -1.0))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # reductions and shape -------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise ---------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    ra, rb = a.requires_grad, b.requires_grad
    return _node(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape) if ra else None,
                                             _unbroadcast(g * ad, bd.shape) if rb else None))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _node(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _node(np.log(ad), (a,), lambda g: (g / ad,))


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    mask = a.data <= b.data
    out = np.where(mask, a.data, b.data)
    sa, sb = a.shape, b.shape
    return _node(out, (a, b), lambda g: (_unbroadcast(g * mask, sa), _unbroadcast(g * ~mask, sb)))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# linear algebra and shape --------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    ra, rb = a.requires_grad, b.requires_grad
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T if ra else None, ad.T @ g if rb else None))


def bmm(a, b) -> Tensor:
    """Batched matmul of (G, m, k) and (G, k, n) operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ValueError(f"bmm shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    ra, rb = a.requires_grad, b.requires_grad
    return _node(np.matmul(ad, bd), (a, b),
                 lambda g: (np.matmul(g, bd.transpose(0, 2, 1)) if ra else None,
                            np.matmul(ad.transpose(0, 2, 1), g) if rb else None))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, np.integer)) or p is None or p is Ellipsis for p in parts)


def getitem(a: Tensor, idx) -> Tensor:
    shape = a.shape
    basic = _is_basic_index(idx)

    def back(g):
        out = np.zeros(shape)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), back)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    n = len(tensors)
    return _node(
        np.stack([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.squeeze(p, axis=axis) for p in np.split(g, n, axis=axis)),
    )


# composite -----------------------------------------------------------------
def log_softmax(a: Tensor, axis=-1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return _node(out, (a,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy of ``logits`` (N, C) against integer targets."""
    targets = np.asarray(targets, dtype=np.int64)
    logp = log_softmax(logits, axis=1)
    picked = getitem(logp, (np.arange(len(targets)), targets))
    return -picked.mean()


def conv2d(x: Tensor, w: Tensor, stride: int) -> Tensor:
    """Valid (unpadded) 2-D convolution; x is (N, H, W, C), w is (kh, kw, C, O)."""
    n, h, wd, c = x.shape
    kh, kw, cin, cout = w.shape
    if cin != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {cin}")
    if h < kh or wd < kw:
        raise ValueError(f"conv2d input {h}x{wd} smaller than kernel {kh}x{kw}")
    cols = kernels.im2col(x.data, kh, kw, stride)
    oh, ow = cols.shape[1], cols.shape[2]
    cols2 = cols.reshape(-1, kh * kw * c)
    w2 = w.data.reshape(kh * kw * c, cout)
    out = (cols2 @ w2).reshape(n, oh, ow, cout)

    def back(g):
        g2 = g.reshape(-1, cout)
        gw = (cols2.T @ g2).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gx = kernels.col2im((g2 @ w2.T).reshape(n, oh, ow, kh * kw * c), h, wd, c, kh, kw, stride)
        return (gx, gw)

    return _node(out, (x, w), back)


def gru_recurrence(xin: Tensor, w_hid: Tensor, b_hid: Tensor) -> Tensor:
    """GRU hidden-state recurrence from a zero state, fused into one node.

    ``xin`` is the precomputed input projection (T, B, 3H) in gate order
    (reset, update, candidate); returns the final hidden state (B, H).
    """
    steps, B, H3 = xin.shape
    H = H3 // 3
    x, W, bh = xin.data, w_hid.data, b_hid.data
    hs = np.zeros((steps + 1, B, H))
    rs = np.empty((steps, B, H))
    us = np.empty((steps, B, H))
    ns = np.empty((steps, B, H))
    hns = np.empty((steps, B, H))
    for t in range(steps):
        hh = hs[t] @ W + bh
        xt = x[t]
        r = 0.5 * (1.0 + np.tanh(0.5 * (xt[:, :H] + hh[:, :H])))
        u = 0.5 * (1.0 + np.tanh(0.5 * (xt[:, H:2 * H] + hh[:, H:2 * H])))
        hn = hh[:, 2 * H:]
        n = np.tanh(xt[:, 2 * H:] + r * hn)
        hs[t + 1] = n + u * (hs[t] - n)
        rs[t], us[t], ns[t], hns[t] = r, u, n, hn

    def back(g):
        dx = np.empty_like(x)
        dhh_all = np.empty((steps, B, H3))
        dh = g.copy()
        for t in range(steps - 1, -1, -1):
            r, u, n, hn, hp = rs[t], us[t], ns[t], hns[t], hs[t]
            dan = dh * (1.0 - u) * (1.0 - n * n)
            dau = dh * (hp - n) * u * (1.0 - u)
            dar = dan * hn * r * (1.0 - r)
            dx[t, :, :H] = dar
            dx[t, :, H:2 * H] = dau
            dx[t, :, 2 * H:] = dan
            dhh = dhh_all[t]
            dhh[:, :H] = dar
            dhh[:, H:2 * H] = dau
            dhh[:, 2 * H:] = dan * r
            dh = dh * u + dhh @ W.T
        flat = dhh_all.reshape(steps * B, H3)
        dW = hs[:-1].reshape(steps * B, H).T @ flat
        return (dx, dW, flat.sum(axis=0))

    return _node(hs[-1].copy(), (xin, w_hid, b_hid), back)


# differentiation -------------------------------------------------------------
def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def grad(loss: Tensor, wrt) -> list:
    """Gradients of scalar ``loss`` with respect to each tensor in ``wrt``.

    Tensors that ``loss`` does not depend on receive zero gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError(f"loss is not finite: {loss.item()}")
    grads = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        for node in reversed(_topo_order(loss)):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return [grads.get(id(t), np.zeros_like(t.data)).reshape(t.shape) for t in wrt]
