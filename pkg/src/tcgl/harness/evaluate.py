"""Evaluation probes: order accuracy, cosine nearest-neighbour retrieval and embedding export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import synthvideo as sv
from ..model import video_embeddings
from .checkpoint import Checkpoint
from .config import DATASETS
from .train import make_tuples, order_accuracy

EMBED_BATCH = 256


@dataclass(frozen=True)
class DatasetSpec:
    """Which synthetic videos to evaluate on.

    Geometry comes from the checkpoint's config; any geometry given here must
    agree with it. ``classes`` overrides the class cycle (default: all moving
    classes, or the static class for ``dataset="static"``).
    """
    size: int
    split: str = "eval"
    seed: int | None = None
    dataset: str = "motion"
    classes: tuple[int, ...] | None = None
    noise: float | None = None
    n: int | None = None
    l: int | None = None  # noqa: E741
    channels: int | None = None
    height: int | None = None
    width: int | None = None

    def check(self, config) -> None:
        if self.dataset not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}")
        if self.size < 0:
            raise ValueError("dataset size must be non-negative")
        for key in ("n", "l", "channels", "height", "width"):
            want = getattr(self, key)
            if want is not None and want != getattr(config, key):
                raise ValueError(f"dataset {key}={want} does not match checkpoint {key}={getattr(config, key)}")

    def videos(self, config) -> list[sv.Video]:
        self.check(config)
        classes = self.classes
        if classes is None:
            classes = (sv.STATIC_CLASS,) if self.dataset == "static" else tuple(range(sv.NUM_MOTION_CLASSES))
        seed = config.seed if self.seed is None else self.seed
        noise = config.noise if self.noise is None else self.noise
        return sv.make_dataset(self.size, config.sampler, seed, split=self.split, classes=classes,
                               channels=config.channels, height=config.height, width=config.width,
                               noise=noise)


def _as_checkpoint(ckpt) -> Checkpoint:
    return ckpt if isinstance(ckpt, Checkpoint) else Checkpoint.load(ckpt)


def probe_order_accuracy(checkpoint, spec: DatasetSpec, seed: int = 0, best: bool = False) -> float:
    """Fraction of tuples (one per video) whose predicted order class is right.

    Features come from uncorrupted snippets and nothing is updated.
    """
    ckpt = _as_checkpoint(checkpoint)
    config = ckpt.config
    videos = spec.videos(config)
    if not videos:
        raise ValueError("cannot probe an empty dataset")
    tuples = make_tuples(videos, config, seed, "probe/shuffle")
    return order_accuracy(ckpt.model(best=best), config, tuples)


def embed(checkpoint, videos: Sequence[sv.Video], best: bool = False) -> np.ndarray:
    ckpt = _as_checkpoint(checkpoint)
    model = ckpt.model(best=best)
    width = model.encoder.width
    chunks = [video_embeddings(model, ckpt.config, np.stack([v.samples for v in videos[i:i + EMBED_BATCH]]))
              for i in range(0, len(videos), EMBED_BATCH)]
    return np.concatenate(chunks) if chunks else np.zeros((0, width))


def cosine_distances(queries: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    def unit(x):
        norm = np.linalg.norm(x, axis=1, keepdims=True)
        return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)
    return 1.0 - unit(queries) @ unit(gallery).T


def topk_accuracy(query_emb: np.ndarray, query_labels, gallery_emb: np.ndarray, gallery_labels,
                  ks: Sequence[int], self_index: Sequence[int] | None = None) -> dict[int, float]:
    """Hit rate of "true class among the k nearest gallery classes" for each ``k``.

    ``self_index[q]`` names the gallery item identical to query ``q`` (or -1);
    that item is removed from the query's neighbour list. Ties in distance
    are broken by gallery index.
    """
    gallery_labels = np.asarray(gallery_labels)
    query_labels = np.asarray(query_labels)
    if len(gallery_labels) == 0:
        raise ValueError("gallery is empty")
    if len(query_labels) == 0:
        raise ValueError("no queries")
    for k in ks:
        if not 1 <= k <= len(gallery_labels):
            raise ValueError(f"k={k} outside [1, gallery size {len(gallery_labels)}]")
    dist = cosine_distances(query_emb, gallery_emb)
    if self_index is not None:
        rows = np.arange(len(query_labels))
        own = np.asarray(self_index)
        valid = own >= 0
        dist[rows[valid], own[valid]] = np.inf
    ranked = np.argsort(dist, axis=1, kind="stable")
    hits = {}
    for k in ks:
        neighbours = ranked[:, :k]
        usable = np.isfinite(np.take_along_axis(dist, neighbours, axis=1))
        match = (gallery_labels[neighbours] == query_labels[:, None]) & usable
        hits[k] = float(match.any(axis=1).mean())
    return hits


def retrieve(checkpoint, gallery: DatasetSpec, query: DatasetSpec, ks: Sequence[int] = (1, 5, 10),
             exclude_self: bool = True, best: bool = False) -> dict[int, float]:
    """Top-k retrieval accuracy of mean snippet features under cosine distance.

    Two specs that differ only in ``size`` draw the same videos for shared
    indices; with ``exclude_self`` such an identical item is not its own neighbour.
    """
    ckpt = _as_checkpoint(checkpoint)
    g_videos, q_videos = gallery.videos(ckpt.config), query.videos(ckpt.config)
    g_emb, q_emb = embed(ckpt, g_videos, best), embed(ckpt, q_videos, best)
    self_index = None
    if exclude_self and _same_source(gallery, query):
        self_index = np.where(np.arange(len(q_videos)) < len(g_videos), np.arange(len(q_videos)), -1)
    return topk_accuracy(q_emb, [v.label for v in q_videos], g_emb, [v.label for v in g_videos], ks,
                         self_index)


def _same_source(a: DatasetSpec, b: DatasetSpec) -> bool:
    keys = ("split", "seed", "dataset", "classes", "noise")
    return all(getattr(a, k) == getattr(b, k) for k in keys)


def export_embeddings(checkpoint, spec: DatasetSpec, path: str | Path, best: bool = False) -> Path:
    """Write ``id,label,e0,...`` rows with 17 significant digits."""
    ckpt = _as_checkpoint(checkpoint)
    videos = spec.videos(ckpt.config)
    emb = embed(ckpt, videos, best)
    width = emb.shape[1]
    lines = [",".join(["id", "label"] + [f"e{i}" for i in range(width)])]
    for i, (video, row) in enumerate(zip(videos, emb)):
        lines.append(",".join([str(i), str(video.label)] + ["%.17g" % v for v in row]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_embeddings(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(ids, labels, embeddings)`` from an exported file."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    width = len(rows[0].split(",")) - 2
    body = [r.split(",") for r in rows[1:] if r]
    if not body:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, width))
    ids = np.array([int(r[0]) for r in body])
    labels = np.array([int(r[1]) for r in body])
    emb = np.array([[float(v) for v in r[2:]] for r in body])
    return ids, labels, emb
