""" Semi-supervised Mean Teacher training of the convnet.

The student minimises L_total = L_sup + w(t) * L_cons, where L_sup is the soft cross-entropy against averaged
annotator votes and L_cons is the squared distance between student and teacher class probabilities. After every
optimiser step the teacher becomes an exponential moving average of the student.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from read_pipeline.common.exceptions import EmptyLabeledSet, InvalidConfiguration, ShapeMismatch
from read_pipeline.common.utility import write_csv
from read_pipeline.model.convnet import (N_TRANSFORMS, SGD, ConvNet, augment_batch, ema_update, init_params,
                                         softmax_backward)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MeanTeacherConfig:
    epochs: int = 60
    rampup_epochs: int = 40
    rampup_target: float = 12.5
    rampup_shape: str = 'linear'
    ema_alpha: float = 0.99
    labeled_batch: int = 32
    unlabeled_batch: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    consistency_on_labeled: bool = True
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        if self.rampup_target < 0:
            raise InvalidConfiguration('mean_teacher.rampup_target', "must be non-negative")
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise InvalidConfiguration('mean_teacher.ema_alpha', "must lie in [0, 1]")
        if self.rampup_shape not in ('linear', 'sigmoid'):
            raise InvalidConfiguration('mean_teacher.rampup_shape', "must be linear or sigmoid")
        if self.labeled_batch < 1 or self.unlabeled_batch < 1:
            raise InvalidConfiguration('mean_teacher.labeled_batch', "batch sizes must be positive")

    @classmethod
    def from_config(cls, config):
        section = config.mean_teacher
        return cls(epochs=section.epochs, rampup_epochs=section.rampup_epochs, rampup_target=section.rampup_target,
                   rampup_shape=section.rampup_shape, ema_alpha=section.ema_alpha,
                   labeled_batch=section.labeled_batch, unlabeled_batch=section.unlabeled_batch, lr=section.lr,
                   momentum=section.momentum, consistency_on_labeled=section.consistency_on_labeled,
                   seed=config.seed, progress=config.logging.progress)


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """ Images with class-probability targets (soft labels or one-hot). """
    images: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.targets):
            raise ShapeMismatch("Labeled targets", (len(self.images), 'C'), self.targets.shape)

    def __len__(self):
        return len(self.images)

    @property
    def majority(self):
        """ Majority-vote class of every image (first class wins a tie). """
        return np.argmax(self.targets, axis=1)

    def subset(self, indices):
        return LabeledSet(images=self.images[indices], targets=self.targets[indices])


def holdout_split(n, test_fraction, rng):
    """ Shuffled train/test indices with round(test_fraction * n) test items. """
    order = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def rampup_weight(epoch, config):
    """ Consistency weight w(t) for a zero-based epoch.

    The linear ramp is rampup_target * min(epoch / rampup_epochs, 1); the sigmoid ramp multiplies the target by
    exp(-5 (1 - t)^2) with t the same clipped ratio.
    """
    if config.rampup_epochs <= 0:
        return float(config.rampup_target)
    t = min(max(epoch, 0) / config.rampup_epochs, 1.0)
    if config.rampup_shape == 'sigmoid':
        return float(config.rampup_target * math.exp(-5.0 * (1.0 - t) ** 2))
    return float(config.rampup_target * t)


def supervised_loss(probs, soft_labels):
    """ Mean soft cross-entropy -sum(y * log p) over the batch.

    Probabilities below 1e-12 on a labeled class are clamped (and logged) rather than producing infinities.
    """
    probs = np.asarray(probs, dtype=float)
    soft_labels = np.asarray(soft_labels, dtype=float)
    if probs.shape != soft_labels.shape:
        raise ShapeMismatch("Soft labels", probs.shape, soft_labels.shape)
    clamped = (probs < PROB_FLOOR) & (soft_labels > 0)
    if np.any(clamped):
        logging.warning("Clamped {} labeled-class probabilities at {}".format(int(clamped.sum()), PROB_FLOOR))
    logp = np.log(np.maximum(probs, PROB_FLOOR))
    return float(-(soft_labels * logp).sum(axis=1).mean())


def supervised_logits_grad(probs, soft_labels):
    """ Gradient of supervised_loss with respect to the logits (labels rows sum to one). """
    return (probs - soft_labels) / len(probs)


def consistency_loss(student_probs, teacher_probs):
    """ Mean over the batch of the squared Euclidean distance between probability vectors. """
    student_probs = np.asarray(student_probs, dtype=float)
    teacher_probs = np.asarray(teacher_probs, dtype=float)
    if student_probs.shape != teacher_probs.shape:
        raise ShapeMismatch("Teacher probabilities", student_probs.shape, teacher_probs.shape)
    return float(((student_probs - teacher_probs) ** 2).sum(axis=1).mean())


def consistency_logits_grad(student_probs, teacher_probs):
    """ Gradient of consistency_loss with respect to the student logits; the teacher is held constant. """
    grad_probs = 2.0 * (student_probs - teacher_probs) / len(student_probs)
    return softmax_backward(grad_probs, student_probs)


def accuracy(net, params, images, classes, batch_size=64):
    if len(images) == 0:
        return float('nan')
    predicted = np.argmax(net.predict_proba(params, images, batch_size=batch_size), axis=1)
    return float(np.mean(predicted == np.asarray(classes)))


@dataclass
class StepResult:
    student: object
    teacher: object
    l_sup: float
    l_cons: float
    w: float
    total: float


def train_step(net, optimizer, student, teacher, labeled_images, labeled_targets, unlabeled_images, w, alpha,
               student_ids, teacher_ids, consistency_on_labeled=True):
    """ One optimiser step of the student followed by the teacher's EMA update.

    Student and teacher see the same images under independently drawn augmentation ids.

    :rtype: StepResult
    """
    n_labeled = len(labeled_images)
    images = np.concatenate([labeled_images, unlabeled_images]) if len(unlabeled_images) else labeled_images
    student_out = net.forward(student, augment_batch(images, student_ids))
    l_sup = supervised_loss(student_out.probs[:n_labeled], labeled_targets)
    logits_grad = np.zeros_like(student_out.logits)
    logits_grad[:n_labeled] = supervised_logits_grad(student_out.probs[:n_labeled], labeled_targets)

    start = 0 if consistency_on_labeled else n_labeled
    l_cons = 0.0
    if start < len(images):
        teacher_out = net.forward(teacher, augment_batch(images[start:], teacher_ids[start:]))
        l_cons = consistency_loss(student_out.probs[start:], teacher_out.probs)
        if w > 0:
            logits_grad[start:] += w * consistency_logits_grad(student_out.probs[start:], teacher_out.probs)

    grads = net.backward(student, student_out.cache, logits_grad)
    student = optimizer.step(student, grads)
    teacher = ema_update(teacher, student, alpha)
    return StepResult(student=student, teacher=teacher, l_sup=l_sup, l_cons=l_cons, w=w, total=l_sup + w * l_cons)


@dataclass
class EpochRecord:
    epoch: int
    l_sup: float
    l_cons: float
    w: float
    total: float
    test_acc: float
    student_acc: Optional[float] = None


@dataclass
class TrainReport:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    @property
    def final_accuracy(self):
        return self.records[-1].test_acc if self.records else float('nan')

    def to_frame(self):
        return pd.DataFrame([[r.epoch, r.l_sup, r.l_cons, r.w, r.total, r.test_acc] for r in self.records],
                            columns=['epoch', 'l_sup', 'l_cons', 'w', 'total', 'test_acc'])

    def save(self, path, meta=None):
        write_csv(path, self.to_frame(), meta)


def _streams(seed):
    """ Independent generators for batch order, student augmentations and teacher augmentations. """
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(3)]


def _index_stream(n, batch, steps, rng):
    """ Indices for `steps` batches drawn from fresh permutations, wrapping around as needed. """
    needed = steps * batch
    order = np.concatenate([rng.permutation(n) for _ in range(int(math.ceil(needed / n)))])
    return order[:needed].reshape(steps, batch)


def steps_per_epoch(n_labeled, n_unlabeled, config):
    steps = int(math.ceil(n_labeled / config.labeled_batch))
    if n_unlabeled:
        steps = max(steps, int(math.ceil(n_unlabeled / config.unlabeled_batch)))
    return steps


def train(spec, labeled, unlabeled, config, test=None, init=None):
    """ Mean Teacher training.

    :param ConvNetSpec spec: Network architecture.
    :param LabeledSet labeled: Labeled images with soft labels.
    :param numpy.ndarray unlabeled: Unlabeled images (possibly empty).
    :param MeanTeacherConfig config: Training settings.
    :param LabeledSet test: Held-out images; accuracy is measured against their majority labels.
    :param ParamSet init: Optional initial parameters (seeded initialisation otherwise).
    :return: (student, teacher, report)
    :rtype: tuple
    """
    if len(labeled) == 0:
        raise EmptyLabeledSet()
    unlabeled = np.asarray(unlabeled, dtype=float) if unlabeled is not None and len(unlabeled) else \
        np.zeros((0,) + labeled.images.shape[1:])
    net = ConvNet(spec)
    order_rng, student_rng, teacher_rng = _streams(config.seed)
    student = init if init is not None else init_params(spec, np.random.default_rng(config.seed))
    teacher = student.copy()
    optimizer = SGD(lr=config.lr, momentum=config.momentum)
    steps = steps_per_epoch(len(labeled), len(unlabeled), config)
    labeled_batch = min(config.labeled_batch, len(labeled))
    unlabeled_batch = min(config.unlabeled_batch, len(unlabeled))
    logging.info("Mean Teacher training: {} labeled, {} unlabeled, {} steps per epoch".format(
        len(labeled), len(unlabeled), steps))

    report = TrainReport()
    for epoch in tqdm(range(config.epochs), desc='mean-teacher', disable=None if config.progress else True):
        w = rampup_weight(epoch, config)
        labeled_index = _index_stream(len(labeled), labeled_batch, steps, order_rng)
        unlabeled_index = _index_stream(len(unlabeled), unlabeled_batch, steps, order_rng) if len(unlabeled) \
            else np.zeros((steps, 0), dtype=int)
        totals = np.zeros(3)
        for step in range(steps):
            images_l = labeled.images[labeled_index[step]]
            targets_l = labeled.targets[labeled_index[step]]
            images_u = unlabeled[unlabeled_index[step]]
            count = len(images_l) + len(images_u)
            result = train_step(net, optimizer, student, teacher, images_l, targets_l, images_u, w,
                                config.ema_alpha, student_ids=student_rng.integers(0, N_TRANSFORMS, count),
                                teacher_ids=teacher_rng.integers(0, N_TRANSFORMS, count),
                                consistency_on_labeled=config.consistency_on_labeled)
            student, teacher = result.student, result.teacher
            totals += (result.l_sup, result.l_cons, result.total)
        totals /= steps
        test_acc = accuracy(net, teacher, test.images, test.majority) if test is not None else float('nan')
        student_acc = accuracy(net, student, test.images, test.majority) if test is not None else None
        report.append(EpochRecord(epoch=epoch, l_sup=float(totals[0]), l_cons=float(totals[1]), w=w,
                                  total=float(totals[2]), test_acc=test_acc, student_acc=student_acc))
        logging.debug("epoch {}: l_sup {:.4f} l_cons {:.4f} w {:.3f} test_acc {:.4f}".format(
            epoch, totals[0], totals[1], w, test_acc))
    return student, teacher, report


def train_supervised(spec, labeled, config, test=None, init=None):
    """ Plain supervised training on the labeled images, with the batch order and augmentations that train()
    draws for its student.

    :return: (params, report)
    :rtype: tuple
    """
    if len(labeled) == 0:
        raise EmptyLabeledSet()
    net = ConvNet(spec)
    order_rng, student_rng, _ = _streams(config.seed)
    params = init if init is not None else init_params(spec, np.random.default_rng(config.seed))
    optimizer = SGD(lr=config.lr, momentum=config.momentum)
    steps = steps_per_epoch(len(labeled), 0, config)
    batch = min(config.labeled_batch, len(labeled))

    report = TrainReport()
    for epoch in tqdm(range(config.epochs), desc='supervised', disable=None if config.progress else True):
        index = _index_stream(len(labeled), batch, steps, order_rng)
        total = 0.0
        for step in range(steps):
            images = augment_batch(labeled.images[index[step]], student_rng.integers(0, N_TRANSFORMS, batch))
            out = net.forward(params, images)
            targets = labeled.targets[index[step]]
            total += supervised_loss(out.probs, targets)
            grads = net.backward(params, out.cache, supervised_logits_grad(out.probs, targets))
            params = optimizer.step(params, grads)
        test_acc = accuracy(net, params, test.images, test.majority) if test is not None else float('nan')
        report.append(EpochRecord(epoch=epoch, l_sup=total / steps, l_cons=0.0, w=0.0, total=total / steps,
                                  test_acc=test_acc))
    return params, report
