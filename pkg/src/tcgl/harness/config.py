"""Flat ``key=value`` training configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..encoder import VARIANTS
from ..synthvideo import SamplerConfig

VIEW_MODES = ("edges+nodes", "edges", "nodes", "noise")
ASOP_INPUTS = ("nodes", "view2")
DATASETS = ("motion", "static")


@dataclass
class TrainConfig:
    seed: int = 0
    # sampling
    n: int = 3
    l: int = 8  # noqa: E741
    p: int = 2
    m: int = 4
    # synthetic data
    dataset: str = "motion"
    channels: int = 1
    height: int = 16
    width: int = 16
    noise: float = 0.05
    train_size: int = 128
    val_size: int = 64
    # model
    encoder: str = "tiny-conv3d"
    feature_width: int = 32
    conv_channels: int = 8
    kernel_t: int = 3
    kernel_d: int = 3
    gcn_width: int = 32
    gcn_depth: int = 1
    stkd: bool = True
    asop: bool = True
    asop_input: str = "nodes"
    # contrastive views
    tau: float = 0.5
    view_mode: str = "edges+nodes"
    view1_p_r: float = 0.2
    view1_p_m: float = 0.1
    view2_p_r: float = 0.0
    view2_p_m: float = 0.0
    noise_sigma: float = 0.1
    # objective
    alpha: float = 1.0
    beta: float = 1.0
    lambda_g: float = 1.0
    lambda_o: float = 1.0
    # optimisation
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 16
    epochs: int = 200
    lr_decay_epoch: int = 100
    lr_decay_factor: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.sampler  # noqa: B018  (raises on bad n/l/p/m)
        for name in ("view1_p_r", "view1_p_m", "view2_p_r", "view2_p_m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        for name in ("alpha", "beta", "lambda_g", "lambda_o", "lr", "momentum", "weight_decay",
                     "lr_decay_factor", "noise", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")
        if self.train_size < 1 or self.val_size < 0:
            raise ValueError("train_size must be positive and val_size non-negative")
        if not 1 <= self.gcn_depth <= 3:
            raise ValueError("gcn_depth must be 1..3")
        checks = (("encoder", VARIANTS), ("view_mode", VIEW_MODES), ("asop_input", ASOP_INPUTS),
                  ("dataset", DATASETS))
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.n, self.l, self.p, self.m)

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> TrainConfig:
        values = parse_assignments(text)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> TrainConfig:
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def coerce(key: str, raw: str):
    if key not in _TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if kind == "bool":
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
            raise ValueError(f"{key}: cannot read {raw!r} as a boolean")
        return low in ("true", "1", "yes", "on")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip()


def parse_assignments(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = coerce(key, raw)
    return values
