"""The full TCGL model and its batched forward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numcore as nc
from .asop import AsopParams, asop_forward, init_asop, total_loss
from .encoder import EncoderParams, encode, init_encoder
from .stkd import stkd_residual
from .synthvideo import SnippetTuple, stream
from .tcg import (ContrastiveParams, GcnParams, chain_adjacency, corruption_masks, gcn_forward,
                  graph_contrastive_loss, init_gcn, init_projection)

COMPONENTS = ("encoder", "gcn_intra", "gcn_inter", "head", "asop")


@dataclass
class TCGLModel:
    encoder: EncoderParams
    gcn_intra: GcnParams
    gcn_inter: GcnParams
    head: ContrastiveParams
    asop: AsopParams

    def named_parameters(self) -> dict[str, nc.Tensor]:
        out = {}
        for comp in COMPONENTS:
            for name, t in getattr(self, comp).named_parameters().items():
                out[f"{comp}.{name}"] = t
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(arrays) != set(params):
            missing, extra = set(params) - set(arrays), set(arrays) - set(params)
            raise ValueError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, t in params.items():
            if arrays[name].shape != t.shape:
                raise ValueError(f"{name}: stored shape {arrays[name].shape}, model expects {t.shape}")
            t.data = np.array(arrays[name], dtype=np.float64)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named_parameters().items()}


def init_model(config) -> TCGLModel:
    """Initialise every component from its own named stream of ``config.seed``."""
    seed = config.seed
    return TCGLModel(
        encoder=init_encoder(stream(seed, "init/encoder"), config.encoder, config.channels,
                             config.feature_width, conv_channels=config.conv_channels,
                             t=config.kernel_t, d=config.kernel_d),
        gcn_intra=init_gcn(stream(seed, "init/gcn_intra"), config.feature_width, config.gcn_width,
                           config.gcn_depth),
        gcn_inter=init_gcn(stream(seed, "init/gcn_inter"), config.feature_width, config.gcn_width,
                           config.gcn_depth),
        head=init_projection(stream(seed, "init/head"), config.gcn_width, tau=config.tau),
        asop=init_asop(stream(seed, "init/asop"), config.n, config.gcn_width, gated=config.asop),
    )


@dataclass
class BatchOutput:
    j_g: nc.Tensor
    j_o: nc.Tensor
    j: nc.Tensor
    logits: nc.Tensor
    classes: np.ndarray

    @property
    def correct(self) -> int:
        return int((np.argmax(self.logits.data, axis=-1) == self.classes).sum())


def stack_tuples(tuples: Sequence[SnippetTuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    snippets = np.stack([np.stack(t.snippets) for t in tuples])  # B x n x C x l x H x W
    perms = np.array([t.permutation for t in tuples], dtype=np.int64)
    classes = np.array([t.order_class for t in tuples], dtype=np.int64)
    return snippets, perms, classes


def _features(model: TCGLModel, config, clips: np.ndarray) -> nc.Tensor:
    x = stkd_residual(clips) if config.stkd else nc.Tensor(clips)
    return encode(x, model.encoder)


def frameset_clips(snippets: np.ndarray, m: int) -> np.ndarray:
    """``[B, n, C, l, H, W]`` -> ``[B, n, m, C, l/m, H, W]``, frame-sets in temporal order."""
    b, n, c, length, h, w = snippets.shape
    return np.moveaxis(snippets.reshape(b, n, c, m, length // m, h, w), 3, 2)


def _views(x: nc.Tensor, a: np.ndarray, config, rng: np.random.Generator):
    """Corrupted view 1 and view 2 (adjacency, features) for a batch of graphs."""
    width = x.shape[-1]
    p_r, p_m = config.view1_p_r, config.view1_p_m
    if config.view_mode == "edges":
        p_m = 0.0
    elif config.view_mode == "nodes":
        p_r = 0.0
    out = []
    for view, (pr, pm) in enumerate(((p_r, p_m), (config.view2_p_r, config.view2_p_m))):
        if view == 0 and config.view_mode == "noise":
            eps = config.noise_sigma * rng.standard_normal(x.shape)
            out.append((a, nc.add(x, eps)))
            continue
        a_tilde, mask = corruption_masks(rng, a, width, pr, pm)
        out.append((a_tilde, x if pm == 0 else nc.mul(x, np.broadcast_to(mask, x.shape))))
    return out


def graph_loss(model: TCGLModel, config, snippet_feats: nc.Tensor, frameset_feats: nc.Tensor | None,
               perms: np.ndarray, rng: np.random.Generator) -> tuple[nc.Tensor, nc.Tensor]:
    """Per-tuple ``alpha * sum_k J_intra^k + beta * J_inter`` and the view-2 inter embeddings."""
    b, n = perms.shape
    true_order = np.argsort(perms, axis=1)  # rank -> slot
    x_inter = nc.take(snippet_feats, (np.arange(b)[:, None], true_order))
    (a1, x1), (a2, x2) = _views(x_inter, chain_adjacency(n, (b,)), config, rng)
    u, v = gcn_forward((x1, a1), model.gcn_inter), gcn_forward((x2, a2), model.gcn_inter)
    j_inter = graph_contrastive_loss(u, v, model.head)
    if frameset_feats is not None and config.m > 1:
        (a1, x1), (a2, x2) = _views(frameset_feats, chain_adjacency(config.m, (b, n)), config, rng)
        ui = gcn_forward((x1, a1), model.gcn_intra)
        vi = gcn_forward((x2, a2), model.gcn_intra)
        j_intra = nc.sum(graph_contrastive_loss(ui, vi, model.head), axis=-1)
    else:
        j_intra = nc.Tensor(np.zeros(b))
    j_g = nc.add(nc.scale(j_intra, config.alpha), nc.scale(j_inter, config.beta))
    return j_g, v


def asop_inputs(model: TCGLModel, config, snippet_feats: nc.Tensor, perms: np.ndarray,
                inter_view2: nc.Tensor | None = None) -> nc.Tensor:
    """Slot-ordered snippet embeddings fed to the order head.

    ``nodes`` runs the inter-graph GCN with self-loops only, so no edge built
    from the true order reaches the prediction. ``view2`` re-indexes the
    uncorrupted inter-graph embeddings, whose chain edges encode the answer.
    """
    b, n = perms.shape
    if config.asop_input == "nodes":
        return gcn_forward((snippet_feats, np.zeros((n, n))), model.gcn_inter)
    if inter_view2 is None:
        x_inter = nc.take(snippet_feats, (np.arange(b)[:, None], np.argsort(perms, axis=1)))
        inter_view2 = gcn_forward((x_inter, chain_adjacency(n, (b,))), model.gcn_inter)
    return nc.take(inter_view2, (np.arange(b)[:, None], perms))


def forward_batch(model: TCGLModel, config, tuples: Sequence[SnippetTuple],
                  rng: np.random.Generator) -> BatchOutput:
    snippets, perms, classes = stack_tuples(tuples)
    snippet_feats = _features(model, config, snippets)
    frameset_feats = _features(model, config, frameset_clips(snippets, config.m)) if config.m > 1 else None
    j_g_each, v_inter = graph_loss(model, config, snippet_feats, frameset_feats, perms, rng)
    j_g = nc.mean(j_g_each)
    logits = asop_forward(asop_inputs(model, config, snippet_feats, perms, v_inter), model.asop).logits
    j_o = nc.mean(nc.softmax_cross_entropy(logits, classes))
    return BatchOutput(j_g, j_o, total_loss(j_g, j_o, config.lambda_g, config.lambda_o), logits, classes)


def predict_logits(model: TCGLModel, config, tuples: Sequence[SnippetTuple]) -> np.ndarray:
    """Order logits with uncorrupted features; ``view2`` input mode reads the true order."""
    snippets, perms, _ = stack_tuples(tuples)
    feats = _features(model, config, snippets)
    return asop_forward(asop_inputs(model, config, feats, perms), model.asop).logits.data


def video_embeddings(model: TCGLModel, config, samples: np.ndarray) -> np.ndarray:
    """Mean encoder feature over the temporally ordered snippets of each video ``[V, C, L, H, W]``."""
    sampler = config.sampler
    snippets = np.stack([samples[:, :, s:s + sampler.l] for s in sampler.starts()], axis=1)
    return _features(model, config, snippets).data.mean(axis=1)


__all__ = ["TCGLModel", "init_model", "forward_batch", "predict_logits", "video_embeddings",
           "BatchOutput"]
