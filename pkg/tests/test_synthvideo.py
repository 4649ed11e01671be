import itertools
import math

import numpy as np
import pytest

from tcgl import synthvideo as sv
from tcgl.stkd import stkd_residual


def test_sampler_config_validation():
    assert sv.SamplerConfig().min_frames == 3 * 8 + 2 * 2
    with pytest.raises(ValueError):
        sv.SamplerConfig(l=8, m=3)
    with pytest.raises(ValueError):
        sv.SamplerConfig(n=6)
    with pytest.raises(ValueError):
        sv.SamplerConfig(n=1)


def test_codec_anchors():
    assert sv.encode_permutation((0, 1, 2)) == 0
    assert sv.encode_permutation((2, 1, 0)) == 5
    assert sv.decode_class(5, 3) == (2, 1, 0)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_codec_round_trip_and_lexicographic_order(n):
    perms = sorted(itertools.permutations(range(n)))
    ranks = [sv.encode_permutation(p) for p in perms]
    assert ranks == list(range(math.factorial(n)))
    assert [sv.decode_class(r, n) for r in ranks] == perms


def test_codec_errors():
    with pytest.raises(ValueError):
        sv.encode_permutation((0, 0, 1))
    with pytest.raises(ValueError):
        sv.decode_class(6, 3)
    with pytest.raises(ValueError):
        sv.decode_class(-1, 3)


def test_noiseless_frames_depend_only_on_class_and_time():
    cfg = sv.SamplerConfig()
    a = sv.generate_video(3, cfg, seed=1, noise=0.0)
    b = sv.generate_video(3, cfg, seed=999, noise=0.0)
    assert np.array_equal(a.samples, b.samples)
    c = sv.generate_video(4, cfg, seed=1, noise=0.0)
    assert not np.array_equal(a.samples, c.samples)


def test_generation_is_seeded_and_bounded():
    cfg = sv.SamplerConfig()
    a = sv.generate_video(2, cfg, seed=5)
    b = sv.generate_video(2, cfg, seed=5)
    assert np.array_equal(a.samples, b.samples)
    assert a.samples.shape == (1, cfg.min_frames, 16, 16)
    assert a.samples.min() >= 0.0 and a.samples.max() <= 1.0
    assert a.label == 2


def test_moving_frames_are_not_exchangeable():
    v = sv.generate_video(0, sv.SamplerConfig(), seed=2)
    frames = v.samples[0]
    assert not np.array_equal(frames[0], frames[1])
    # the block gets brighter over time, so order is recoverable from intensity alone
    assert frames[-1].max() > frames[0].max()


def test_static_class_has_identical_frames_and_zero_residual():
    v = sv.generate_video(sv.STATIC_CLASS, sv.SamplerConfig(), seed=3)
    assert (v.samples == v.samples[:, :1]).all()
    assert np.array_equal(stkd_residual(v.samples).data, np.zeros_like(v.samples))


def test_generate_errors():
    cfg = sv.SamplerConfig()
    with pytest.raises(ValueError):
        sv.generate_video(len(sv.MOTIONS), cfg, 0)
    with pytest.raises(ValueError):
        sv.generate_video(0, cfg, 0, frames=cfg.min_frames - 1)


def test_start_frames_follow_length_plus_gap():
    assert sv.SamplerConfig(n=3, l=16, p=8, m=4).starts() == [0, 24, 48]


def test_snippets_are_sub_slices_at_documented_offsets():
    cfg = sv.SamplerConfig()
    video = sv.generate_video(1, cfg, seed=4)
    for seed in range(20):
        tup = sv.sample_and_shuffle(video, cfg, seed)
        assert tup.order_class == sv.encode_permutation(tup.permutation)
        for snippet, rank in zip(tup.snippets, tup.permutation):
            start = rank * (cfg.l + cfg.p)
            assert np.array_equal(snippet, video.samples[:, start:start + cfg.l])


def test_identity_permutation_gives_class_zero():
    cfg = sv.SamplerConfig()
    video = sv.generate_video(0, cfg, seed=0)
    seed = next(s for s in range(100) if tuple(np.random.default_rng(s).permutation(3)) == (0, 1, 2))
    assert sv.sample_and_shuffle(video, cfg, seed).order_class == 0


def test_shuffle_uniformity():
    cfg = sv.SamplerConfig()
    video = sv.generate_video(0, cfg, seed=0)
    counts = np.bincount([sv.sample_and_shuffle(video, cfg, s).order_class for s in range(10_000)], minlength=6)
    assert np.abs(counts / 10_000 - 1 / 6).max() < 0.02


def test_sample_rejects_short_video():
    with pytest.raises(ValueError):
        sv.sample_and_shuffle(np.zeros((1, 10, 4, 4)), sv.SamplerConfig(), 0)


def test_partition_framesets():
    snippet = np.random.default_rng(0).standard_normal((1, 16, 3, 3))
    parts = sv.partition_framesets(snippet, 4)
    assert len(parts) == 4 and all(p.shape == (1, 4, 3, 3) for p in parts)
    assert np.array_equal(np.concatenate(parts, axis=1), snippet)
    assert np.array_equal(sv.partition_framesets(snippet, 1)[0], snippet)
    with pytest.raises(ValueError):
        sv.partition_framesets(snippet, 3)


def test_dataset_cycles_classes_and_round_trips(tmp_path):
    cfg = sv.SamplerConfig()
    videos = sv.make_dataset(10, cfg, seed=7, split="train")
    assert [v.label for v in videos] == [i % 8 for i in range(10)]
    path = tmp_path / "train.tcgv"
    sv.dump_dataset(videos, path)
    back = sv.load_dataset(path)
    assert all(np.array_equal(a.samples, b.samples) and a.label == b.label for a, b in zip(videos, back))
    assert path.read_bytes()[:4] == b"TCGV"
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ValueError):
        sv.load_dataset(path)


def test_named_streams_are_independent_and_reproducible():
    a = sv.stream(0, "video/train", 3).random(4)
    assert np.array_equal(a, sv.stream(0, "video/train", 3).random(4))
    assert not np.array_equal(a, sv.stream(0, "video/val", 3).random(4))
    assert not np.array_equal(a, sv.stream(1, "video/train", 3).random(4))
