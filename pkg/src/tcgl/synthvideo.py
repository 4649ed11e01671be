"""Synthetic videos, snippet sampling and the permutation <-> order-class codec."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# (dy, dx) in pixels per frame; the last entry is the static control class.
MOTIONS: tuple[tuple[int, int], ...] = (
    (0, 1), (0, -1), (1, 0), (-1, 0),
    (0, 2), (0, -2), (2, 0), (-2, 0),
    (0, 0),
)
NUM_MOTION_CLASSES = 8
STATIC_CLASS = 8

BLOCK = 5
BACKGROUND = (0.1, 0.3)
RAMP = (0.25, 1.0)


@dataclass(frozen=True)
class SamplerConfig:
    n: int = 3  # snippets per tuple
    l: int = 8  # frames per snippet  # noqa: E741
    p: int = 2  # gap frames between snippets
    m: int = 4  # frame-sets per snippet

    def __post_init__(self):
        if not 2 <= self.n <= 5:
            raise ValueError(f"snippet count n must be in [2, 5], got {self.n}")
        if self.l < 1 or self.m < 1 or self.p < 0:
            raise ValueError("l and m must be positive, p non-negative")
        if self.l % self.m:
            raise ValueError(f"snippet length {self.l} is not divisible by {self.m} frame-sets")

    @property
    def min_frames(self) -> int:
        return self.n * self.l + (self.n - 1) * self.p

    @property
    def num_classes(self) -> int:
        return math.factorial(self.n)

    def starts(self) -> list[int]:
        return [i * (self.l + self.p) for i in range(self.n)]


@dataclass
class Video:
    samples: np.ndarray  # C x L_total x H x W, values in [0, 1]
    label: int


@dataclass
class SnippetTuple:
    snippets: list[np.ndarray]  # shuffled slot order, each C x l x H x W
    permutation: tuple[int, ...]  # slot -> original temporal rank
    order_class: int


# ---------------------------------------------------------------- permutation codec

def _check_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    perm = tuple(int(v) for v in perm)
    if sorted(perm) != list(range(len(perm))):
        raise ValueError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
    return perm


def encode_permutation(perm: Sequence[int]) -> int:
    """Lexicographic rank of ``perm`` among all permutations of its length."""
    perm = _check_permutation(perm)
    n = len(perm)
    rank = 0
    for i, v in enumerate(perm):
        smaller_after = sum(1 for w in perm[i + 1:] if w < v)
        rank += smaller_after * math.factorial(n - 1 - i)
    return rank


def decode_class(order_class: int, n: int) -> tuple[int, ...]:
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= order_class < math.factorial(n):
        raise ValueError(f"class {order_class} outside [0, {math.factorial(n)})")
    pool = list(range(n))
    out = []
    for i in range(n - 1, -1, -1):
        digit, order_class = divmod(order_class, math.factorial(i))
        out.append(pool.pop(digit))
    return tuple(out)


# ---------------------------------------------------------------- generation

def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent RNG sub-stream keyed by a global seed, a name and indices."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode()), *index])


def generate_video(motion_class: int, config: SamplerConfig, seed: int, *, channels: int = 1,
                   height: int = 16, width: int = 16, frames: int | None = None,
                   noise: float = 0.05) -> Video:
    """A bright block translating over a textured background.

    The block moves with the class velocity, wrapping at the borders, and its
    intensity ramps up linearly across the whole video, which gives every
    moving class a temporal arrow. ``noise`` sets all seeded variation: a
    random start position and background texture plus Gaussian sensor noise
    of that standard deviation. With ``noise == 0`` frame ``t`` depends on the
    class and ``t`` only. The static class keeps the block still, its intensity
    constant and its noise frozen, so all of its frames are identical.
    """
    if not 0 <= motion_class < len(MOTIONS):
        raise ValueError(f"unknown motion class {motion_class}")
    frames = config.min_frames if frames is None else frames
    if frames < config.min_frames:
        raise ValueError(f"{frames} frames cannot hold the configured snippets ({config.min_frames})")
    rng = np.random.default_rng(seed)
    dy, dx = MOTIONS[motion_class]
    static = motion_class == STATIC_CLASS

    if noise > 0:
        background = rng.uniform(*BACKGROUND, size=(channels, 1, height, width))
        y0, x0 = rng.integers(0, height), rng.integers(0, width)
    else:
        background = np.full((channels, 1, height, width), sum(BACKGROUND) / 2)
        y0, x0 = (height - BLOCK) // 2, (width - BLOCK) // 2
    t = np.arange(frames)
    intensity = np.full(frames, 0.6) if static else RAMP[0] + (RAMP[1] - RAMP[0]) * t / max(frames - 1, 1)

    video = np.repeat(background, frames, axis=1)
    rows = (y0 + dy * t[:, None] + np.arange(BLOCK)[None, :]) % height
    cols = (x0 + dx * t[:, None] + np.arange(BLOCK)[None, :]) % width
    for i in range(frames):
        video[:, i, rows[i][:, None], cols[i][None, :]] = intensity[i]
    if noise > 0:
        shape = (channels, 1 if static else frames, height, width)
        video = video + noise * rng.standard_normal(shape)
    return Video(np.clip(video, 0.0, 1.0), motion_class)


def make_dataset(size: int, config: SamplerConfig, seed: int, *, split: str = "train",
                 classes: Sequence[int] | None = None, **video_kwargs) -> list[Video]:
    """``size`` videos cycling through ``classes``, each from its own seeded stream."""
    classes = list(range(NUM_MOTION_CLASSES)) if classes is None else list(classes)
    out = []
    for i in range(size):
        video_seed = stream(seed, "video/" + split, i).integers(0, 2**63)
        out.append(generate_video(classes[i % len(classes)], config, int(video_seed), **video_kwargs))
    return out


# ---------------------------------------------------------------- sampling

def sample_and_shuffle(video: Video | np.ndarray, config: SamplerConfig, seed) -> SnippetTuple:
    """Cut ``n`` snippets starting every ``l + p`` frames and shuffle them."""
    samples = video.samples if isinstance(video, Video) else np.asarray(video)
    if samples.shape[1] < config.min_frames:
        raise ValueError(f"video has {samples.shape[1]} frames, need {config.min_frames}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = tuple(int(v) for v in rng.permutation(config.n))
    ordered = [samples[:, s:s + config.l] for s in config.starts()]
    return SnippetTuple([ordered[r] for r in perm], perm, encode_permutation(perm))


def partition_framesets(snippet: np.ndarray, m: int) -> list[np.ndarray]:
    length = snippet.shape[1]
    if m < 1 or length % m:
        raise ValueError(f"cannot split {length} frames into {m} equal frame-sets")
    return np.split(snippet, m, axis=1)


# ---------------------------------------------------------------- dataset files

MAGIC = b"TCGV"
VERSION = 1


def dump_dataset(videos: Iterable[Video], path: str | Path) -> None:
    videos = list(videos)
    parts = [MAGIC, struct.pack("<II", VERSION, len(videos))]
    for v in videos:
        c, length, h, w = v.samples.shape
        parts.append(struct.pack("<iIIII", v.label, c, length, h, w))
        parts.append(np.ascontiguousarray(v.samples, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_dataset(path: str | Path) -> list[Video]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError("not a TCGV dataset file")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    offset = 12
    videos = []
    for _ in range(count):
        label, c, length, h, w = struct.unpack_from("<iIIII", blob, offset)
        offset += 20
        size = c * length * h * w
        samples = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(c, length, h, w)
        offset += 8 * size
        videos.append(Video(samples.astype(np.float64), label))
    if offset != len(blob):
        raise ValueError("trailing bytes in dataset file")
    return videos
