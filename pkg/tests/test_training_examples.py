"""Probe behaviour that needs full training runs (shared with the acceptance suite)."""

from tcgl.harness.config import TrainConfig
from tcgl.harness.evaluate import DatasetSpec, probe_order_accuracy
from tcgl.harness.train import make_tuples, make_videos, order_accuracy, pretrain


def test_untrained_probe_sits_at_chance(untrained):
    acc = probe_order_accuracy(untrained, DatasetSpec(6000, "probe"))
    assert abs(acc - 1 / 6) <= 0.03


def test_trained_probe_generalises(default_run):
    assert probe_order_accuracy(default_run[0], DatasetSpec(1000, "probe")) > 0.9


def test_static_training_stays_at_chance(static_run):
    _, log, _ = static_run
    assert abs(probe_order_accuracy(static_run[0], DatasetSpec(6000, "probe", dataset="static"),
                                    best=True) - 1 / 6) <= 0.05
    # a constant prediction cannot beat the entropy of uniform order labels
    assert sum(r.j_o for r in log.rows[-10:]) / 10 > 1.6


def test_best_checkpoint_beats_first_epoch(default_run):
    config = TrainConfig()
    first, _ = pretrain(config.replace(epochs=1))
    val = make_tuples(make_videos(config, config.val_size, "val"), config, config.seed, "val/shuffle")
    best_acc = order_accuracy(default_run[0].model(best=True), config, val)
    first_acc = order_accuracy(first.model(), config, val)
    assert best_acc >= first_acc
    assert default_run[0].best_val == best_acc
