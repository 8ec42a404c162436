# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def gae(const double[:] rewards, const double[:] values, const double[:] dones,
        double last_value, double gamma, double lam):
    cdef Py_ssize_t n = rewards.shape[0]
    cdef Py_ssize_t t
    cdef double next_value, nonterminal, delta, running = 0.0
    out = np.empty(n, dtype=np.float64)
    cdef double[:] adv = out
    for t in range(n - 1, -1, -1):
        next_value = last_value if t == n - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return out


def bfs_distances(const unsigned char[:, :] free, Py_ssize_t src_r, Py_ssize_t src_c):
    cdef Py_ssize_t h = free.shape[0], w = free.shape[1]
    out = np.full((h, w), -1, dtype=np.int64)
    cdef long long[:, :] dist = out
    queue = np.empty(h * w, dtype=np.int64)
    cdef long long[:] q = queue
    cdef Py_ssize_t head = 0, tail = 0, cell, r, c, k, nr, nc
    cdef int dr[4]
    cdef int dc[4]
    dr[0] = -1; dr[1] = 1; dr[2] = 0; dr[3] = 0
    dc[0] = 0; dc[1] = 0; dc[2] = -1; dc[3] = 1
    if not free[src_r, src_c]:
        return out
    dist[src_r, src_c] = 0
    q[tail] = src_r * w + src_c
    tail += 1
    while head < tail:
        cell = q[head]
        head += 1
        r = cell // w
        c = cell % w
        for k in range(4):
            nr = r + dr[k]
            nc = c + dc[k]
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            if free[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = dist[r, c] + 1
                q[tail] = nr * w + nc
                tail += 1
    return out


def nearest_centroid(const double[:, :] points, const double[:, :] centroids):
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1], k = centroids.shape[0]
    cdef Py_ssize_t i, j, m, best
    cdef double acc, diff, best_d
    labels_arr = np.empty(n, dtype=np.int64)
    dists_arr = np.empty(n, dtype=np.float64)
    cdef long long[:] labels = labels_arr
    cdef double[:] dists = dists_arr
    for i in range(n):
        best = 0
        best_d = 0.0
        for j in range(k):
            acc = 0.0
            for m in range(d):
                diff = points[i, m] - centroids[j, m]
                acc += diff * diff
            if j == 0 or acc < best_d:
                best = j
                best_d = acc
        labels[i] = best
        dists[i] = best_d
    return labels_arr, dists_arr


def im2col(const double[:, :, :, :] x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = (h - kh) // stride + 1, ow = (w - kw) // stride + 1
    cdef Py_ssize_t b, i, j, di, dj, ch, col
    out = np.empty((n, oh, ow, kh * kw * c), dtype=np.float64)
    cdef double[:, :, :, :] cols = out
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                col = 0
                for di in range(kh):
                    for dj in range(kw):
                        for ch in range(c):
                            cols[b, i, j, col] = x[b, i * stride + di, j * stride + dj, ch]
                            col += 1
    return out


def col2im(const double[:, :, :, :] cols, Py_ssize_t h, Py_ssize_t w, Py_ssize_t c,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef Py_ssize_t n = cols.shape[0], oh = cols.shape[1], ow = cols.shape[2]
    cdef Py_ssize_t b, i, j, di, dj, ch, col
    out = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, :] x = out
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                col = 0
                for di in range(kh):
                    for dj in range(kw):
                        for ch in range(c):
                            x[b, i * stride + di, j * stride + dj, ch] += cols[b, i, j, col]
                            col += 1
    return out
