"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

from collections import deque

import numpy as np


def gae(rewards, values, dones, last_value, gamma, lam):
    n = len(rewards)
    adv = np.empty(n, dtype=np.float64)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = last_value if t == n - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv


def bfs_distances(free, src_r, src_c):
    h, w = free.shape
    dist = np.full((h, w), -1, dtype=np.int64)
    if not free[src_r, src_c]:
        return dist
    dist[src_r, src_c] = 0
    queue = deque([(src_r, src_c)])
    while queue:
        r, c = queue.popleft()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = dist[r, c] + 1
                queue.append((nr, nc))
    return dist


def nearest_centroid(points, centroids):
    # (n, k) squared distances; argmin keeps the first minimum -> lowest index on ties
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(len(points)), labels]


def im2col(x, kh, kw, stride):
    n, h, w, c = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    # win: (n, h-kh+1, w-kw+1, c, kh, kw)
    win = win[:, ::stride, ::stride][:, :oh, :ow]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n, oh, ow, kh * kw * c)


def col2im(cols, h, w, c, kh, kw, stride):
    n, oh, ow, _ = cols.shape
    out = np.zeros((n, h, w, c), dtype=np.float64)
    patches = cols.reshape(n, oh, ow, kh, kw, c)
    for di in range(kh):
        for dj in range(kw):
            out[:, di:di + stride * oh:stride, dj:dj + stride * ow:stride, :] += patches[:, :, :, di, dj, :]
    return out
