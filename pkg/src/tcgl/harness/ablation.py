"""Configuration sweeps over one (possibly composite) axis and several seeds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig, coerce
from .train import MetricsRow, pretrain


def parse_axis(axis: str, values: str | Sequence[str]) -> list[dict]:
    """Settings for each value of ``axis``.

    A composite axis ``"lambda_g,lambda_o"`` takes values like ``"0:1"``;
    ``values`` is a list or a comma-separated string.
    """
    keys = [k.strip() for k in axis.split(",") if k.strip()]
    if not keys:
        raise ValueError("empty ablation axis")
    if isinstance(values, str):
        values = [v for v in values.split(",") if v.strip()]
    settings = []
    for raw in values:
        parts = raw.split(":") if len(keys) > 1 else [raw]
        if len(parts) != len(keys):
            raise ValueError(f"value {raw!r} does not give {len(keys)} components for axis {axis!r}")
        settings.append({k: coerce(k, p.strip()) for k, p in zip(keys, parts)})
    return settings


@dataclass
class AblationRow:
    setting: dict
    accuracies: list[float]  # final validation order accuracy per seed

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def label(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.setting.items())


def run_ablation(config: TrainConfig, axis: str, values, seeds: Sequence[int] = (0, 1, 2),
                 progress: Callable[[str, int, MetricsRow], None] | None = None) -> list[AblationRow]:
    rows = []
    for setting in parse_axis(axis, values):
        accs = []
        for seed in seeds:
            cfg = config.replace(seed=seed, **setting)
            hook = None if progress is None else (lambda r, s=seed, c=cfg: progress(str(setting), s, r))
            _, log = pretrain(cfg, progress=hook)
            accs.append(log.rows[-1].val_acc)
        rows.append(AblationRow(setting, accs))
    return rows


def format_table(rows: Sequence[AblationRow], seeds: Sequence[int]) -> str:
    head = ["setting"] + [f"seed{s}" for s in seeds] + ["mean"]
    lines = [",".join(head)]
    for row in rows:
        lines.append(",".join([row.label] + [f"{a:.4f}" for a in row.accuracies] + [f"{row.mean:.4f}"]))
    return "\n".join(lines) + "\n"
