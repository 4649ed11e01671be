"""Temporal contrastive graphs: chain graphs, corrupted views, GCN and the hybrid loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoder import uniform_init


@dataclass
class TemporalGraph:
    x: nc.Tensor  # N x F node features, rows in temporal order
    a: np.ndarray  # N x N symmetric 0/1 adjacency, zero diagonal


@dataclass
class GraphView:
    x: nc.Tensor
    a: np.ndarray
    p_r: float
    p_m: float


def chain_adjacency(n: int, batch: tuple[int, ...] = ()) -> np.ndarray:
    a = np.eye(n, k=1) + np.eye(n, k=-1)
    return np.broadcast_to(a, batch + (n, n)).copy()


def build_chain_graph(features) -> TemporalGraph:
    """Chain over consecutive temporal ranks; ``features`` rows are in temporal order."""
    x = nc.stack(features) if isinstance(features, (list, tuple)) else nc.as_tensor(features)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need at least two node feature vectors, got shape {x.shape}")
    return TemporalGraph(x, chain_adjacency(x.shape[0]))


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name}={p} is not a probability")


def corruption_masks(rng: np.random.Generator, a: np.ndarray, width: int, p_r: float,
                     p_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Edge-dropped adjacency and a shared feature mask for each graph in a batch.

    ``a`` is ``[..., N, N]``. Each undirected edge survives with probability
    ``1 - p_r`` (drawn on the upper triangle and mirrored); each of the
    ``width`` feature dimensions survives with probability ``1 - p_m`` and the
    mask is shared by all nodes of a graph.
    """
    _check_prob("p_r", p_r)
    _check_prob("p_m", p_m)
    keep = np.triu(rng.random(a.shape) >= p_r, k=1)
    keep = keep | np.swapaxes(keep, -1, -2)
    dropped = a * keep
    mask = (rng.random(a.shape[:-2] + (1, width)) >= p_m).astype(np.float64)
    return dropped, mask


def generate_view(graph: TemporalGraph, p_r: float, p_m: float, seed) -> GraphView:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a, mask = corruption_masks(rng, graph.a, graph.x.shape[-1], p_r, p_m)
    x = graph.x if p_m == 0 else nc.mul(graph.x, mask)
    return GraphView(x, a, p_r, p_m)


def normalized_adjacency(a: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``; batched."""
    a_hat = a + np.eye(a.shape[-1])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=-1))
    return a_hat * inv_sqrt[..., :, None] * inv_sqrt[..., None, :]


@dataclass
class GcnParams:
    weights: list[nc.Tensor]
    biases: list[nc.Tensor]

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[1]

    def named_parameters(self) -> dict[str, nc.Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out


def init_gcn(rng: np.random.Generator, in_width: int, out_width: int, depth: int = 1) -> GcnParams:
    if not 1 <= depth <= 3:
        raise ValueError(f"GCN depth must be 1..3, got {depth}")
    weights, biases = [], []
    width = in_width
    for _ in range(depth):
        weights.append(uniform_init(rng, (width, out_width), width))
        biases.append(uniform_init(rng, (out_width,), width))
        width = out_width
    return GcnParams(weights, biases)


def gcn_forward(view: GraphView | tuple, params: GcnParams) -> nc.Tensor:
    """``relu(A_norm X W + b)`` per layer, for one graph or a batch ``[..., N, F]``."""
    x, a = (view.x, view.a) if isinstance(view, (GraphView, TemporalGraph)) else view
    x = nc.as_tensor(x)
    if x.shape[-1] != params.in_width:
        raise ValueError(f"node features have width {x.shape[-1]}, GCN expects {params.in_width}")
    if a.shape[-1] != x.shape[-2] or a.shape[-2] != x.shape[-2]:
        raise ValueError(f"adjacency {a.shape} does not match {x.shape[-2]} nodes")
    prop = nc.Tensor(normalized_adjacency(a))
    h = x
    for w, b in zip(params.weights, params.biases):
        h = nc.relu(nc.add(nc.matmul(prop, nc.linear(h, w)), b))
    return h


# ---------------------------------------------------------------- contrastive objective

@dataclass
class ContrastiveParams:
    w1: nc.Tensor
    b1: nc.Tensor
    w2: nc.Tensor
    b2: nc.Tensor
    tau: float = 0.5

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be positive")

    def named_parameters(self) -> dict[str, nc.Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_projection(rng: np.random.Generator, width: int, hidden: int | None = None,
                    tau: float = 0.5) -> ContrastiveParams:
    hidden = width if hidden is None else hidden
    return ContrastiveParams(
        w1=uniform_init(rng, (width, hidden), width),
        b1=uniform_init(rng, (hidden,), width),
        w2=uniform_init(rng, (hidden, width), hidden),
        b2=uniform_init(rng, (width,), hidden),
        tau=tau,
    )


def project(h: nc.Tensor, params: ContrastiveParams) -> nc.Tensor:
    """Two-layer projection head followed by L2 normalisation."""
    z = nc.linear(nc.relu(nc.linear(h, params.w1, params.b1)), params.w2, params.b2)
    return nc.l2_normalize(z)


def _directional(zu: nc.Tensor, zv: nc.Tensor, tau: float) -> nc.Tensor:
    """Per-node ``-log(pos / (pos + inter negatives + intra negatives))``.

    Written as ``log(1 + sum_k!=i exp(s_uv[i,k] - s_uv[i,i]) + sum_k!=i exp(s_uu[i,k] - s_uv[i,i]))``
    so that no negatives give exactly zero.
    """
    n = zu.shape[-2]
    off = 1.0 - np.eye(n)
    s_uv = nc.scale(nc.matmul(zu, nc.swap_last(zv)), 1.0 / tau)
    s_uu = nc.scale(nc.matmul(zu, nc.swap_last(zu)), 1.0 / tau)
    pos = nc.sum(nc.mul(s_uv, np.eye(n)), axis=-1, keepdims=True)
    neg = nc.add(nc.mul(nc.exp(nc.sub(s_uv, pos)), off), nc.mul(nc.exp(nc.sub(s_uu, pos)), off))
    return nc.log(nc.add_scalar(nc.sum(neg, axis=-1), 1.0))


def pair_losses(u: nc.Tensor, v: nc.Tensor, params: ContrastiveParams) -> nc.Tensor:
    """``l(u_i, v_i)`` for every node ``i``; shape ``[..., N]``."""
    return _directional(project(u, params), project(v, params), params.tau)


def pair_loss(u: nc.Tensor, v: nc.Tensor, i: int, params: ContrastiveParams) -> nc.Tensor:
    """``l(u_i, v_i)`` against all rows of ``u`` and ``v``; a scalar."""
    return nc.take(pair_losses(u, v, params), (Ellipsis, i))


def graph_contrastive_loss(u: nc.Tensor, v: nc.Tensor, params: ContrastiveParams) -> nc.Tensor:
    """``1/(2N) sum_i [l(u_i, v_i) + l(v_i, u_i)]``; batched over leading axes."""
    if u.shape != v.shape:
        raise ValueError(f"view embeddings differ in shape: {u.shape} vs {v.shape}")
    zu, zv = project(u, params), project(v, params)
    both = nc.add(_directional(zu, zv, params.tau), _directional(zv, zu, params.tau))
    return nc.scale(nc.mean(both, axis=-1), 0.5)


def tcg_total_loss(intra_losses, inter_loss, alpha: float = 1.0, beta: float = 1.0) -> nc.Tensor:
    if alpha < 0 or beta < 0:
        raise ValueError("loss weights must be non-negative")
    intra = nc.as_tensor(0.0)
    for loss in intra_losses:
        intra = nc.add(intra, loss)
    return nc.add(nc.scale(intra, alpha), nc.scale(nc.as_tensor(inter_loss), beta))
