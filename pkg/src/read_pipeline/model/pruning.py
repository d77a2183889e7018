""" Binary inhabited/uninhabited classifier and the pruning of district tile sets. """
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet

import numpy as np
import pandas as pd

from read_pipeline.common.constants import PRUNER_CLASS_NAMES
from read_pipeline.common.exceptions import EmptyLabeledSet, InvalidConfiguration, SingleClassTrainingSet
from read_pipeline.common.utility import read_csv, write_csv
from read_pipeline.geo.tiles import TileId
from read_pipeline.model.convnet import ConvNet
from read_pipeline.model.mean_teacher import LabeledSet, MeanTeacherConfig, accuracy, holdout_split, \
    train_supervised

INHABITED = PRUNER_CLASS_NAMES.index('inhabited')


@dataclass(frozen=True)
class PrunerConfig:
    threshold: float = 0.5
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    test_fraction: float = 0.2
    seed: int = 0
    progress: bool = False

    @classmethod
    def from_config(cls, config):
        section = config.pruning
        return cls(threshold=section.threshold, epochs=section.epochs, batch_size=section.batch_size, lr=section.lr,
                   momentum=section.momentum, test_fraction=section.test_fraction, seed=config.seed,
                   progress=config.logging.progress)

    def training_config(self):
        return MeanTeacherConfig(epochs=self.epochs, rampup_target=0.0, labeled_batch=self.batch_size,
                                 unlabeled_batch=self.batch_size, lr=self.lr, momentum=self.momentum,
                                 seed=self.seed, progress=self.progress)


def binary_targets(inhabited):
    """ One-hot (uninhabited, inhabited) targets from majority verdicts. """
    inhabited = np.asarray(inhabited, dtype=bool)
    targets = np.zeros((len(inhabited), len(PRUNER_CLASS_NAMES)))
    targets[:, INHABITED] = inhabited
    targets[:, 1 - INHABITED] = ~inhabited
    return targets


def train_pruner(spec, images, inhabited, config):
    """ Train the binary classifier on an 80/20 split of the labeled images.

    :param ConvNetSpec spec: Architecture with two classes.
    :param numpy.ndarray images: N x H x W x 3 normalized images.
    :param inhabited: Majority inhabited verdict per image.
    :param PrunerConfig config: Training settings.
    :return: (parameters, held-out accuracy, TrainReport)
    :rtype: tuple
    """
    if spec.n_classes != len(PRUNER_CLASS_NAMES):
        raise InvalidConfiguration('convnet.n_classes', "the pruner is a two-class network")
    inhabited = np.asarray(inhabited, dtype=bool)
    if len(inhabited) == 0:
        raise EmptyLabeledSet()
    if inhabited.all() or not inhabited.any():
        raise SingleClassTrainingSet()
    train_index, test_index = holdout_split(len(inhabited), config.test_fraction, np.random.default_rng(config.seed))
    dataset = LabeledSet(images=np.asarray(images, dtype=float), targets=binary_targets(inhabited))
    train_set, test_set = dataset.subset(train_index), dataset.subset(test_index)
    params, report = train_supervised(spec, train_set, config.training_config(), test=test_set)
    held_out = accuracy(ConvNet(spec), params, test_set.images, test_set.majority)
    logging.info("Pruner held-out accuracy {:.4f} on {} images".format(held_out, len(test_set)))
    return params, held_out, report


@dataclass(frozen=True)
class PrunedSelection:
    district_id: str
    kept: FrozenSet[TileId]
    removed: FrozenSet[TileId]
    fallback: bool = False
    probabilities: Dict[TileId, float] = field(default_factory=dict, compare=False)

    @property
    def n_before(self):
        return len(self.kept) + len(self.removed)

    @property
    def n_after(self):
        return len(self.kept)

    @property
    def removed_fraction(self):
        return len(self.removed) / self.n_before if self.n_before else 0.0

    def sorted_kept(self):
        return sorted(self.kept)


def prune(selection, classifier, threshold=0.5):
    """ Keep the tiles whose P(inhabited) reaches the threshold.

    When nothing would be kept, the single most probably inhabited tile is retained and the district is flagged.

    :param TileSelection selection: The district's selected tiles.
    :param classifier: Callable mapping a list of TileIds to an array of P(inhabited).
    :param float threshold: Decision threshold.
    :rtype: PrunedSelection
    """
    tiles = selection.sorted_tiles()
    if not tiles:
        return PrunedSelection(district_id=selection.district_id, kept=frozenset(), removed=frozenset())
    probabilities = np.asarray(classifier(tiles), dtype=float)
    keep = probabilities >= threshold
    fallback = False
    if not keep.any():
        keep[int(np.argmax(probabilities))] = True
        fallback = True
        logging.warning("District {}: every tile classified uninhabited, keeping the most probable one".format(
            selection.district_id))
    kept = frozenset(tile for tile, flag in zip(tiles, keep) if flag)
    removed = frozenset(tile for tile, flag in zip(tiles, keep) if not flag)
    return PrunedSelection(district_id=selection.district_id, kept=kept, removed=removed, fallback=fallback,
                           probabilities={tile: float(p) for tile, p in zip(tiles, probabilities)})


def keep_all(selection):
    """ Pruning disabled: every selected tile is kept. """
    return PrunedSelection(district_id=selection.district_id, kept=selection.tiles, removed=frozenset())


def prune_report(pruned):
    """ Per-district summary: `district_id,n_before,n_after,removed_fraction,fallback_flag`. """
    return pd.DataFrame([[p.district_id, p.n_before, p.n_after, p.removed_fraction, int(p.fallback)] for p in pruned],
                        columns=['district_id', 'n_before', 'n_after', 'removed_fraction', 'fallback_flag'])


def write_pruned(path, pruned, meta=None):
    """ Write every tile with its probability and verdict: `district_id,z,x,y,p_inhabited,kept,fallback`. """
    rows = []
    for selection in pruned:
        for tile in sorted(selection.kept | selection.removed):
            rows.append((selection.district_id, tile.z, tile.x, tile.y, selection.probabilities.get(tile, 1.0),
                         int(tile in selection.kept), int(selection.fallback)))
    frame = pd.DataFrame(rows, columns=['district_id', 'z', 'x', 'y', 'p_inhabited', 'kept', 'fallback'])
    write_csv(path, frame, meta)


def read_pruned(path, district_ids=()):
    """ Read pruned selections back; listed districts without rows get empty selections.

    :return: (district id -> PrunedSelection, metadata)
    :rtype: tuple
    """
    frame, meta = read_csv(path)
    grouped = {district_id: ([], [], {}, False) for district_id in district_ids}
    for district_id, z, x, y, p, kept, fallback in frame.itertuples(index=False):
        kept_tiles, removed_tiles, probabilities, flagged = grouped.setdefault(district_id, ([], [], {}, False))
        tile = TileId(x=int(x), y=int(y), z=int(z))
        (kept_tiles if int(kept) else removed_tiles).append(tile)
        probabilities[tile] = float(p)
        grouped[district_id] = (kept_tiles, removed_tiles, probabilities, flagged or bool(int(fallback)))
    pruned = {district_id: PrunedSelection(district_id=district_id, kept=frozenset(kept), removed=frozenset(removed),
                                           fallback=flagged, probabilities=probabilities)
              for district_id, (kept, removed, probabilities, flagged) in grouped.items()}
    return pruned, meta
