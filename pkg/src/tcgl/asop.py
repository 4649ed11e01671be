"""Adaptive snippet order prediction: excitation-gated snippet features and the joint loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoder import uniform_init


def joint_width(n: int, width: int) -> int:
    """``c_u = sum_k c_k / (2n)``, floored, at least 1."""
    return max(1, (n * width) // (2 * n))


def classifier_hidden(n: int, width: int) -> int:
    return max(32, n * width // 2)


@dataclass
class AsopParams:
    n: int
    width: int  # c_k
    ws: nc.Tensor | None  # n x (n c_k) x c_u
    bs: nc.Tensor | None  # n x c_u
    we: nc.Tensor | None  # n x c_u x c_k
    be: nc.Tensor | None  # n x c_k
    w1: nc.Tensor
    b1: nc.Tensor
    w2: nc.Tensor
    b2: nc.Tensor

    @property
    def gated(self) -> bool:
        return self.ws is not None

    @property
    def num_classes(self) -> int:
        return math.factorial(self.n)

    def named_parameters(self) -> dict[str, nc.Tensor]:
        names = ("ws", "bs", "we", "be", "w1", "b1", "w2", "b2")
        return {k: getattr(self, k) for k in names if getattr(self, k) is not None}


def init_asop(rng: np.random.Generator, n: int, width: int, gated: bool = True) -> AsopParams:
    """``gated=False`` builds the plain concatenate-and-classify head."""
    cu = joint_width(n, width)
    hidden = classifier_hidden(n, width)
    cat = n * width
    gate = {}
    if gated:
        gate = dict(
            ws=uniform_init(rng, (n, cat, cu), cat),
            bs=uniform_init(rng, (n, cu), cat),
            we=uniform_init(rng, (n, cu, width), cu),
            be=uniform_init(rng, (n, width), cu),
        )
    else:
        gate = dict(ws=None, bs=None, we=None, be=None)
    return AsopParams(
        n, width, **gate,
        w1=uniform_init(rng, (cat, hidden), cat),
        b1=uniform_init(rng, (hidden,), cat),
        w2=uniform_init(rng, (hidden, math.factorial(n)), hidden),
        b2=uniform_init(rng, (math.factorial(n),), hidden),
    )


@dataclass
class OrderPrediction:
    logits: nc.Tensor  # [..., n!]

    @property
    def probabilities(self) -> np.ndarray:
        return nc.softmax(self.logits)

    @property
    def predicted_class(self):
        pred = np.argmax(self.logits.data, axis=-1)
        return int(pred) if pred.ndim == 0 else pred


def refine(features: nc.Tensor, params: AsopParams) -> nc.Tensor:
    """Gate each slot's feature by ``relu(E^k)`` computed from all slots; ``[..., n, c_k]``."""
    lead = features.shape[:-2]
    n, ck = params.n, params.width
    joint = nc.reshape(features, lead + (1, 1, n * ck))
    z = nc.add(nc.reshape(nc.matmul(joint, params.ws), lead + (n, -1)), params.bs)
    e = nc.add(nc.reshape(nc.matmul(nc.reshape(z, lead + (n, 1, -1)), params.we), lead + (n, ck)),
               params.be)
    return nc.mul(features, nc.relu(e))


def asop_forward(snippet_embeddings, params: AsopParams) -> OrderPrediction:
    """Order logits from ``n`` snippet embeddings given in shuffled slot order.

    ``snippet_embeddings`` is a list of ``n`` vectors or a tensor ``[..., n, c_k]``.
    """
    f = nc.stack(snippet_embeddings) if isinstance(snippet_embeddings, (list, tuple)) \
        else nc.as_tensor(snippet_embeddings)
    if f.ndim < 2 or f.shape[-2:] != (params.n, params.width):
        raise ValueError(f"expected [..., {params.n}, {params.width}] embeddings, got {f.shape}")
    if params.gated:
        f = refine(f, params)
    flat = nc.reshape(f, f.shape[:-2] + (params.n * params.width,))
    hidden = nc.relu(nc.linear(flat, params.w1, params.b1))
    return OrderPrediction(nc.linear(hidden, params.w2, params.b2))


def order_loss(prediction: OrderPrediction, true_class) -> nc.Tensor:
    """Cross-entropy of the order logits; averaged when batched."""
    loss = nc.softmax_cross_entropy(prediction.logits, true_class)
    return loss if loss.ndim == 0 else nc.mean(loss)


def total_loss(j_g, j_o, lambda_g: float = 1.0, lambda_o: float = 1.0) -> nc.Tensor:
    if lambda_g < 0 or lambda_o < 0:
        raise ValueError("loss weights must be non-negative")
    return nc.add(nc.scale(nc.as_tensor(j_g), lambda_g), nc.scale(nc.as_tensor(j_o), lambda_o))
