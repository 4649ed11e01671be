"""Shared clip encoder standing in for a 3D CNN backbone.

Both variants pool globally over time and space, so one parameter set encodes
clips of any length: whole snippets and their frame-sets alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc

# sqrt(6) keeps activation variance roughly constant through relu layers.
GAIN = math.sqrt(6.0)
VARIANTS = ("pooled-mlp", "tiny-conv3d")


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> nc.Tensor:
    bound = GAIN / math.sqrt(fan_in)
    return nc.Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class EncoderParams:
    variant: str
    w1: nc.Tensor
    b1: nc.Tensor
    w2: nc.Tensor | None = None
    b2: nc.Tensor | None = None
    kernel: nc.Tensor | None = None

    @property
    def channels(self) -> int:
        return self.kernel.shape[1] if self.kernel is not None else self.w1.shape[0]

    @property
    def width(self) -> int:
        return (self.w2 if self.w2 is not None else self.w1).shape[1]

    def named_parameters(self) -> dict[str, nc.Tensor]:
        names = ("kernel", "w1", "b1", "w2", "b2")
        return {k: getattr(self, k) for k in names if getattr(self, k) is not None}


def init_encoder(rng: np.random.Generator, variant: str = "tiny-conv3d", channels: int = 1,
                 width: int = 32, hidden: int | None = None, conv_channels: int = 8,
                 t: int = 3, d: int = 3) -> EncoderParams:
    """Every tensor uniform in ``+-GAIN / sqrt(fan_in)``."""
    if variant == "pooled-mlp":
        hidden = width if hidden is None else hidden
        return EncoderParams(
            variant,
            w1=uniform_init(rng, (channels, hidden), channels),
            b1=uniform_init(rng, (hidden,), channels),
            w2=uniform_init(rng, (hidden, width), hidden),
            b2=uniform_init(rng, (width,), hidden),
        )
    if variant == "tiny-conv3d":
        fan_in = channels * t * d * d
        return EncoderParams(
            variant,
            kernel=uniform_init(rng, (conv_channels, channels, t, d, d), fan_in),
            w1=uniform_init(rng, (conv_channels, width), conv_channels),
            b1=uniform_init(rng, (width,), conv_channels),
        )
    raise ValueError(f"unknown encoder variant {variant!r}; choose from {VARIANTS}")


def encode(clip, params: EncoderParams) -> nc.Tensor:
    """Map ``[..., C, L, H, W]`` clips to ``[..., F]`` features."""
    x = nc.as_tensor(clip)
    if x.ndim < 4:
        raise ValueError(f"clip must be C x L x H x W, got shape {x.shape}")
    if x.shape[-4] != params.channels:
        raise ValueError(f"clip has {x.shape[-4]} channels, encoder expects {params.channels}")
    lead = x.shape[:-4]
    if params.variant == "pooled-mlp":
        pooled = nc.mean(x, axis=(-3, -2, -1))
        hidden = nc.relu(nc.linear(pooled, params.w1, params.b1))
        return nc.linear(hidden, params.w2, params.b2)
    flat = nc.reshape(x, (-1,) + x.shape[-4:])
    fmap = nc.relu(nc.conv3d(flat, params.kernel))
    pooled = nc.mean(fmap, axis=(2, 3, 4))
    out = nc.linear(pooled, params.w1, params.b1)
    return nc.reshape(out, lead + (params.width,))
