import logging
import math

import numpy as np
import pytest

from read_pipeline.common.constants import CLASS_NAMES
from read_pipeline.common.exceptions import EmptyLabeledSet, InvalidConfiguration, ShapeMismatch
from read_pipeline.model.convnet import ConvNetSpec, SGD, ParamSet
from read_pipeline.model.mean_teacher import LabeledSet, MeanTeacherConfig, consistency_loss, holdout_split, \
    rampup_weight, steps_per_epoch, supervised_loss, train, train_supervised
from read_pipeline.store.images import compute_normalization, normalize_image
from read_pipeline.synth.world import SynthWorldSpec, synth_world, tile_raster

SPEC = ConvNetSpec(input_size=4, channels=(3,), embedding_dim=4, n_classes=3)


def toy_set(n, seed):
    """ Images whose class is the channel carrying an offset, with 0.8/0.1/0.1 soft labels. """
    rng = np.random.default_rng(seed)
    classes = rng.integers(0, 3, size=n)
    one_hot = np.eye(3)[classes]
    images = rng.normal(size=(n, 4, 4, 3)) + 2.0 * one_hot[:, None, None, :]
    return LabeledSet(images=images, targets=0.7 * one_hot + 0.1)


def world_dataset(seed, labeled_tiles=300):
    """ Normalized synthetic tiles with their soft labels, the same tiles with one-hot true classes, and the
    unlabeled rest.
    """
    world = synth_world(SynthWorldSpec(width=30, height=20, districts=6, tile_size=8, field_bumps=4,
                                       field_scale=4.0, labeled_tiles=labeled_tiles), seed)
    rasters = {tile.tile: tile_raster(world, tile) for tile in world.tiles}
    stats = compute_normalization(rasters.values())
    images = {tile: normalize_image(raster, stats=stats).pixels for tile, raster in rasters.items()}
    truth = {tile.tile: tile.tile_class for tile in world.tiles}
    labeled = sorted(world.votes)
    stacked = np.stack([images[tile] for tile in labeled])
    counts = np.array([[votes.count(name) for name in CLASS_NAMES]
                       for votes in (world.votes[tile] for tile in labeled)], dtype=float)
    dataset = LabeledSet(images=stacked, targets=counts / counts.sum(axis=1, keepdims=True))
    exact = LabeledSet(images=stacked, targets=np.eye(len(CLASS_NAMES))[[truth[tile] for tile in labeled]])
    unlabeled = np.stack([images[tile] for tile in sorted(images) if tile not in world.votes])
    return dataset, exact, unlabeled


class TestRampup:
    config = MeanTeacherConfig()

    def test_end_of_rampup(self):
        assert rampup_weight(40, self.config) == 12.5
        assert rampup_weight(59, self.config) == 12.5

    def test_start_and_middle(self):
        assert rampup_weight(0, self.config) == 0.0
        assert rampup_weight(20, self.config) == pytest.approx(6.25)

    def test_non_decreasing(self):
        for shape in ('linear', 'sigmoid'):
            config = MeanTeacherConfig(rampup_shape=shape)
            weights = [rampup_weight(epoch, config) for epoch in range(60)]
            assert all(a <= b for a, b in zip(weights, weights[1:]))

    def test_sigmoid_shape(self):
        config = MeanTeacherConfig(rampup_shape='sigmoid')
        assert rampup_weight(0, config) == pytest.approx(12.5 * math.exp(-5.0))
        assert rampup_weight(40, config) == 12.5

    def test_invalid_settings(self):
        with pytest.raises(InvalidConfiguration):
            MeanTeacherConfig(rampup_target=-1.0)
        with pytest.raises(InvalidConfiguration):
            MeanTeacherConfig(ema_alpha=1.5)


class TestLosses:
    def test_perfect_prediction(self):
        one_hot = np.eye(3)
        assert supervised_loss(one_hot, one_hot) == 0.0

    def test_one_nat(self):
        probs = np.array([[1.0 / math.e, 1.0 - 1.0 / math.e, 0.0]])
        assert supervised_loss(probs, np.array([[1.0, 0.0, 0.0]])) == pytest.approx(1.0)

    def test_zero_probability_is_clamped(self, caplog):
        with caplog.at_level(logging.WARNING):
            loss = supervised_loss(np.array([[0.0, 1.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]))
        assert loss == pytest.approx(-math.log(1e-12))
        assert 'Clamped' in caplog.text

    def test_soft_labels_average_the_one_hot_losses(self):
        probs = np.array([[0.6, 0.3, 0.1]])
        soft = supervised_loss(probs, np.array([[0.75, 0.25, 0.0]]))
        assert soft == pytest.approx(0.75 * -math.log(0.6) + 0.25 * -math.log(0.3))

    def test_consistency(self):
        student = np.array([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0]])
        teacher = np.array([[0.5, 0.5, 0.0], [0.0, 1.0, 0.0]])
        assert consistency_loss(student, teacher) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            supervised_loss(np.ones((2, 3)) / 3, np.ones((2, 2)) / 2)


class TestSplitAndSteps:
    def test_holdout_split(self):
        train_index, test_index = holdout_split(10, 0.2, np.random.default_rng(0))
        assert len(train_index) == 8 and len(test_index) == 2
        assert sorted(np.concatenate([train_index, test_index]).tolist()) == list(range(10))

    def test_steps_cover_the_larger_set(self):
        config = MeanTeacherConfig(labeled_batch=32, unlabeled_batch=32)
        assert steps_per_epoch(100, 0, config) == 4
        assert steps_per_epoch(100, 1000, config) == 32


class TestSgd:
    def test_momentum(self):
        params = ParamSet({'w': np.array([1.0])})
        grads = ParamSet({'w': np.array([1.0])})
        optimizer = SGD(lr=0.1, momentum=0.9)
        params = optimizer.step(params, grads)
        assert params['w'][0] == pytest.approx(0.9)
        params = optimizer.step(params, grads)
        assert params['w'][0] == pytest.approx(0.9 - 0.1 * 1.9)


class TestTraining:
    config = MeanTeacherConfig(epochs=3, rampup_epochs=2, labeled_batch=4, unlabeled_batch=4, seed=5)

    def test_deterministic(self):
        labeled, unlabeled = toy_set(10, 0), np.random.default_rng(1).normal(size=(6, 4, 4, 3))
        first = train(SPEC, labeled, unlabeled, self.config, test=toy_set(4, 2))
        second = train(SPEC, labeled, unlabeled, self.config, test=toy_set(4, 2))
        assert first[0] == second[0]
        assert first[1] == second[1]
        assert first[2].to_frame().equals(second[2].to_frame())

    def test_report(self):
        _, _, report = train(SPEC, toy_set(10, 0), np.random.default_rng(1).normal(size=(6, 4, 4, 3)), self.config,
                             test=toy_set(4, 2))
        frame = report.to_frame()
        assert frame['epoch'].tolist() == [0, 1, 2]
        assert frame['w'].tolist() == [0.0, 6.25, 12.5]
        assert (frame[['l_sup', 'l_cons', 'total']] >= 0).all().all()
        assert frame['test_acc'].between(0.0, 1.0).all()

    def test_teacher_differs_from_student(self):
        student, teacher, _ = train(SPEC, toy_set(10, 0), None, self.config)
        assert student != teacher

    def test_empty_labeled_set(self):
        with pytest.raises(EmptyLabeledSet):
            train(SPEC, toy_set(0, 0), None, self.config)

    def test_supervised_loss_decreases(self):
        labeled = toy_set(16, 3)
        config = MeanTeacherConfig(epochs=15, labeled_batch=16, seed=1, lr=0.05)
        _, report = train_supervised(SPEC, labeled, config)
        assert report.records[-1].l_sup < report.records[0].l_sup

    def test_without_consistency_matches_supervised_training(self):
        labeled = toy_set(12, 4)
        config = MeanTeacherConfig(epochs=4, rampup_epochs=2, rampup_target=0.0, labeled_batch=4, seed=9)
        student, _, report = train(SPEC, labeled, None, config)
        params, baseline = train_supervised(SPEC, labeled, config)
        assert student == params
        assert [r.l_sup for r in report.records] == [r.l_sup for r in baseline.records]


@pytest.mark.slow
def test_teacher_learns_the_synthetic_classes():
    dataset, exact, unlabeled = world_dataset(3)
    train_index, test_index = holdout_split(len(dataset), 0.2, np.random.default_rng(0))
    spec = ConvNetSpec(input_size=8, channels=(8, 8), embedding_dim=8, n_classes=3)
    config = MeanTeacherConfig(epochs=30, rampup_epochs=10, seed=3)
    test = exact.subset(test_index)
    _, _, report = train(spec, dataset.subset(train_index), unlabeled, config, test=test)
    _, baseline = train_supervised(spec, dataset.subset(train_index), config, test=test)
    assert report.final_accuracy >= 0.9
    # one held-out tile of slack
    assert report.final_accuracy >= baseline.final_accuracy - 1.0 / len(test_index)
