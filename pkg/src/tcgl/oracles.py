"""Straight-line scalar reference implementations used to cross-check the vectorised code."""

from __future__ import annotations

import math

import numpy as np


def gcn_layer(x: np.ndarray, a: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One propagation layer with explicit loops over nodes and neighbours."""
    n = x.shape[0]
    degree = [1.0 + sum(a[i][j] for j in range(n)) for i in range(n)]
    xw = [[sum(x[i][f] * w[f][o] for f in range(w.shape[0])) for o in range(w.shape[1])] for i in range(n)]
    out = np.zeros((n, w.shape[1]))
    for i in range(n):
        for o in range(w.shape[1]):
            acc = b[o]
            for j in range(n):
                weight = (1.0 if i == j else 0.0) + a[i][j]
                if weight:
                    acc += weight / math.sqrt(degree[i] * degree[j]) * xw[j][o]
            out[i][o] = max(acc, 0.0)
    return out


def gcn(x: np.ndarray, a: np.ndarray, weights, biases) -> np.ndarray:
    for w, b in zip(weights, biases):
        x = gcn_layer(x, a, w, b)
    return x


def _unit(v):
    norm = math.sqrt(sum(t * t for t in v))
    return [t / norm for t in v]


def _dot(p, q):
    return sum(s * t for s, t in zip(p, q))


def node_loss(zu, zv, i: int, tau: float) -> float:
    """``-log`` of the positive share for node ``i`` with both negative families."""
    pos = math.exp(_dot(zu[i], zv[i]) / tau)
    inter = sum(math.exp(_dot(zu[i], zv[k]) / tau) for k in range(len(zu)) if k != i)
    intra = sum(math.exp(_dot(zu[i], zu[k]) / tau) for k in range(len(zu)) if k != i)
    return -math.log(pos / (pos + inter + intra))


def contrastive_loss(zu: np.ndarray, zv: np.ndarray, tau: float) -> float:
    """Symmetric average over nodes of already-projected embeddings (normalised here)."""
    zu = [_unit(list(r)) for r in zu]
    zv = [_unit(list(r)) for r in zv]
    n = len(zu)
    total = 0.0
    for i in range(n):
        total += node_loss(zu, zv, i, tau) + node_loss(zv, zu, i, tau)
    return total / (2 * n)


def mlp_projection(h: np.ndarray, w1, b1, w2, b2) -> np.ndarray:
    hidden = np.maximum(h @ w1 + b1, 0.0)
    return hidden @ w2 + b2
