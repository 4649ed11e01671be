"""Seeded pretraining loop with metrics logging and checkpoints."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import numcore as nc
from .. import synthvideo as sv
from ..model import forward_batch, init_model, predict_logits
from .checkpoint import Checkpoint
from .config import TrainConfig

COLUMNS = ("epoch", "J_g", "J_o", "J", "train_acc", "val_acc", "wall_time")
EVAL_BATCH = 256


@dataclass
class MetricsRow:
    epoch: int
    j_g: float
    j_o: float
    j: float
    train_acc: float
    val_acc: float
    wall_time: float

    def values(self) -> tuple:
        return (self.epoch, self.j_g, self.j_o, self.j, self.train_acc, self.val_acc, self.wall_time)


@dataclass
class MetricsLog:
    rows: list[MetricsRow] = field(default_factory=list)

    def append(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = [",".join(COLUMNS)]
        for row in self.rows:
            lines.append(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in row.values()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> MetricsLog:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or tuple(lines[0].split(",")) != COLUMNS:
            raise ValueError("metrics header does not match " + ",".join(COLUMNS))
        rows = []
        for ln in lines[1:]:
            cells = ln.split(",")
            rows.append(MetricsRow(int(cells[0]), *(float(c) for c in cells[1:])))
        return cls(rows)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def column(self, name: str) -> np.ndarray:
        i = COLUMNS.index(name)
        return np.array([row.values()[i] for row in self.rows], dtype=np.float64)


# ---------------------------------------------------------------- data

def dataset_classes(config: TrainConfig) -> list[int] | None:
    return [sv.STATIC_CLASS] if config.dataset == "static" else None


def make_videos(config: TrainConfig, size: int, split: str, seed: int | None = None) -> list[sv.Video]:
    seed = config.seed if seed is None else seed
    return sv.make_dataset(size, config.sampler, seed, split=split, classes=dataset_classes(config),
                           channels=config.channels, height=config.height, width=config.width,
                           noise=config.noise)


def make_tuples(videos, config: TrainConfig, seed: int, name: str, *index: int) -> list[sv.SnippetTuple]:
    """One shuffled tuple per video, each from its own sub-stream."""
    return [sv.sample_and_shuffle(v, config.sampler, sv.stream(seed, name, *index, i))
            for i, v in enumerate(videos)]


def order_accuracy(model, config: TrainConfig, tuples) -> float:
    if not tuples:
        return float("nan")
    hits = 0
    for start in range(0, len(tuples), EVAL_BATCH):
        chunk = tuples[start:start + EVAL_BATCH]
        pred = np.argmax(predict_logits(model, config, chunk), axis=-1)
        hits += int((pred == np.array([t.order_class for t in chunk])).sum())
    return hits / len(tuples)


# ---------------------------------------------------------------- training

def learning_rate(config: TrainConfig, epoch: int) -> float:
    """Step schedule; ``epoch`` counts from 0."""
    return config.lr * (config.lr_decay_factor if epoch >= config.lr_decay_epoch else 1.0)


def _snapshot(config, model, opt, epoch, best, best_val, best_epoch) -> Checkpoint:
    return Checkpoint(config, model.arrays(), {k: v.copy() for k, v in opt.buffers.items()}, epoch,
                      best, best_val, best_epoch)


def pretrain(config: TrainConfig, out_dir: str | Path | None = None, resume: Checkpoint | str | Path | None = None,
             progress: Callable[[MetricsRow], None] | None = None) -> tuple[Checkpoint, MetricsLog]:
    """Train from scratch or continue ``resume`` up to ``config.epochs``.

    Returns the final checkpoint, which also carries the best-validation
    snapshot, and the per-epoch metrics. With ``out_dir`` the final and best
    checkpoints and ``metrics.csv`` are written there.
    """
    config.validate()
    model = init_model(config)
    params = model.named_parameters()
    opt = nc.OptimizerState(config.lr, config.momentum, config.weight_decay)
    start, best, best_val, best_epoch = 0, None, -math.inf, -1
    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else Checkpoint.load(resume)
        model.load_arrays(ckpt.params)
        opt.buffers = {k: v.copy() for k, v in ckpt.momentum.items()}
        start, best, best_val, best_epoch = ckpt.epoch, ckpt.best_params, ckpt.best_val, ckpt.best_epoch

    train = make_videos(config, config.train_size, "train")
    val_tuples = make_tuples(make_videos(config, config.val_size, "val"), config, config.seed, "val/shuffle")
    log = MetricsLog()
    clock = time.perf_counter()

    for epoch in range(start, config.epochs):
        opt.lr = learning_rate(config, epoch)
        order = sv.stream(config.seed, "train/order", epoch).permutation(len(train))
        sums = np.zeros(3)
        correct = 0
        for b, lo in enumerate(range(0, len(train), config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            tuples = [sv.sample_and_shuffle(train[i], config.sampler,
                                            sv.stream(config.seed, "train/shuffle", epoch, int(i)))
                      for i in idx]
            out = forward_batch(model, config, tuples, sv.stream(config.seed, "train/views", epoch, b))
            values = (out.j_g.item(), out.j_o.item(), out.j.item())
            if not all(math.isfinite(v) for v in values):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} batch {b}: J_g={values[0]} J_o={values[1]} J={values[2]}")
            for p in params.values():
                p.grad = None
            out.j.backward()
            nc.sgd_step(params, {k: p.grad for k, p in params.items()}, opt)
            sums += np.array(values) * len(idx)
            correct += out.correct
        j_g, j_o, j = sums / len(train)
        row = MetricsRow(epoch + 1, float(j_g), float(j_o), float(j), correct / len(train),
                         order_accuracy(model, config, val_tuples), time.perf_counter() - clock)
        log.append(row)
        if progress is not None:
            progress(row)
        if best is None or row.val_acc > best_val:
            best, best_val, best_epoch = model.arrays(), row.val_acc, epoch + 1

    final = _snapshot(config, model, opt, max(start, config.epochs), best, best_val, best_epoch)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        final.save(out / "final.ckpt")
        if final.best_params is not None:
            final.best_checkpoint().save(out / "best.ckpt")
        log.save(out / "metrics.csv")
        config.save(out / "config.txt")
    return final, log
