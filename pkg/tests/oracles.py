"""Slow, obviously-correct reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def conv2d_loops(x, w, b, stride, pad, groups=1):
    """Direct cross-correlation with explicit loops over n, co, i, j, ci, (ky, kx)."""
    n, cin, h, wd = x.shape
    cout, cin_g, k, _ = w.shape
    xp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    per_group_out = cout // groups
    for bi in range(n):
        for co in range(cout):
            g = co // per_group_out
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else float(b[co])
                    for ci in range(cin_g):
                        src = g * cin_g + ci
                        for ky in range(k):
                            for kx in range(k):
                                acc += w[co, ci, ky, kx] * xp[bi, src, i * stride + ky, j * stride + kx]
                    out[bi, co, i, j] = acc
    return out


def pixel_shuffle_loops(x, r):
    """out(c, r*i + di, r*j + dj) = in(c*r^2 + di*r + dj, i, j)."""
    n, c, h, w = x.shape
    co = c // (r * r)
    out = np.zeros((n, co, h * r, w * r), dtype=x.dtype)
    for bi in range(n):
        for ch in range(co):
            for i in range(h):
                for j in range(w):
                    for di in range(r):
                        for dj in range(r):
                            out[bi, ch, r * i + di, r * j + dj] = x[bi, ch * r * r + di * r + dj, i, j]
    return out


def nearest_loops(x, oh, ow):
    """Destination (i, j) reads source (floor(i*H/oh), floor(j*W/ow))."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(oh):
        for j in range(ow):
            out[:, :, i, j] = x[:, :, (i * h) // oh, (j * w) // ow]
    return out


def static_merge_loops(x):
    n, c = x.shape[:2]
    out = np.zeros((n, c // 2) + x.shape[2:], dtype=x.dtype)
    for j in range(c // 2):
        out[:, j] = x[:, 2 * j] + x[:, 2 * j + 1]
    return out


def score(a, b, similarity):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if similarity == "kernel_mae":
        return -float(np.mean(np.abs(a - b)))
    na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    return float(a @ b) / max(na * nb, 1e-12)


def greedy_matching_exhaustive(vectors, similarity):
    """Enumerate every (even, odd) candidate pair, repeatedly take the best
    remaining one (ties: lowest even index, then lowest odd index)."""
    c = len(vectors)
    evens, odds = list(range(0, c, 2)), list(range(1, c, 2))
    cands = [(score(vectors[a], vectors[b], similarity), a, b) for a, b in itertools.product(evens, odds)]
    taken_a, taken_b, pairs = set(), set(), {}
    while len(pairs) < len(evens):
        best = None
        for s, a, b in cands:
            if a in taken_a or b in taken_b:
                continue
            if best is None or s > best[0] or (s == best[0] and (a, b) < (best[1], best[2])):
                best = (s, a, b)
        _, a, b = best
        taken_a.add(a)
        taken_b.add(b)
        pairs[a] = b
    return [(a, pairs[a]) for a in sorted(pairs)]


def gelu_scalar(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def layer_norm_ref(x, gamma, beta, eps=1e-6):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)


def pointwise_ref(x, w, b):
    y = np.einsum("oc,nchw->nohw", w.reshape(w.shape[0], -1), x)
    return y + (0 if b is None else b.reshape(1, -1, 1, 1))


def sca_ref(x, w, b):
    pooled = x.mean(axis=(2, 3), keepdims=True)
    return x * pointwise_ref(pooled, w, b)
