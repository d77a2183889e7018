import logging
import os

import numpy as np

from read_pipeline.api.api import API, locked
from read_pipeline.common.constants import URBAN
from read_pipeline.common.exceptions import DataError, EmptyLabeledSet
from read_pipeline.common.utility import render_table
from read_pipeline.geo.heatmap import heatmap, write_heatmap
from read_pipeline.geo.selection import read_selections
from read_pipeline.model.convnet import ConvNetSpec, save_checkpoint
from read_pipeline.model.mean_teacher import LabeledSet, MeanTeacherConfig, holdout_split, train
from read_pipeline.model.pruning import INHABITED, PrunerConfig, keep_all, prune, prune_report, train_pruner, \
    write_pruned
from read_pipeline.store.embeddings import save_embeddings
from read_pipeline.store.images import ImageDirectory, NormalizationStats
from read_pipeline.store.labels import load_labels


class ModelAPI(API):
    """ Model API class: the two tile classifiers and everything computed per tile with them. """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)

    def _labeled_images(self, labels):
        """ Normalized images of labeled tiles at the network input size. """
        if not labels:
            raise EmptyLabeledSet()
        stats = NormalizationStats.load(self.workdir.require('normalization'))
        images = ImageDirectory(self.config.paths.images)
        size = self.config.convnet.input_size
        return images, stats, images.load_batch([label.tile for label in labels], stats=stats, size=size)

    def _binary_labels_path(self):
        path = self.config.paths.binary_labels
        return path if path and os.path.isfile(path) else None

    @locked
    def train_extractor(self):
        """ Train the three-class network with Mean Teacher; the teacher is kept as the extractor. """
        config = self.config
        labels = load_labels(config.paths.labels)
        images, stats, labeled_images = self._labeled_images(labels)
        dataset = LabeledSet(images=labeled_images, targets=np.array([label.probs for label in labels]))
        rng = np.random.default_rng(config.seed)
        train_index, test_index = holdout_split(len(dataset), config.mean_teacher.test_fraction, rng)
        train_set, test_set = dataset.subset(train_index), dataset.subset(test_index)

        labeled_tiles = {label.tile for label in labels}
        unlabeled_tiles = [tile for tile in images.tiles if tile not in labeled_tiles]
        limit = config.mean_teacher.unlabeled_limit
        if limit is not None and len(unlabeled_tiles) > limit:
            chosen = np.sort(rng.choice(len(unlabeled_tiles), size=limit, replace=False))
            unlabeled_tiles = [unlabeled_tiles[i] for i in chosen]
        unlabeled = images.load_batch(unlabeled_tiles, stats=stats, size=config.convnet.input_size) \
            if unlabeled_tiles else None

        spec = ConvNetSpec.from_config(config, n_classes=3)
        _, teacher, report = train(spec, train_set, unlabeled, MeanTeacherConfig.from_config(config),
                                   test=test_set if len(test_set) else None)
        save_checkpoint(self.workdir.path('extractor'), spec, teacher, self.meta)
        self.workdir.record('extractor', inputs=[self.workdir.key('normalization')])
        report.save(self.workdir.report_path('extractor_training.csv'), self.meta)
        summary = {'labeled': len(train_set), 'held_out': len(test_set), 'unlabeled': len(unlabeled_tiles),
                   'test_accuracy': report.final_accuracy if len(test_set) else None,
                   'parameters': teacher.size}
        self.write_report('extractor', summary)
        return summary

    @locked
    def train_pruner(self):
        """ Train the inhabited/uninhabited network on the labeled images. """
        config = self.config
        labels = load_labels(config.paths.labels, binary_path=self._binary_labels_path())
        _, _, labeled_images = self._labeled_images(labels)
        spec = ConvNetSpec.from_config(config, n_classes=2)
        params, held_out, report = train_pruner(spec, labeled_images, [label.inhabited_majority for label in labels],
                                                PrunerConfig.from_config(config))
        save_checkpoint(self.workdir.path('pruner'), spec, params, dict(self.meta, held_out_accuracy=held_out))
        self.workdir.record('pruner', inputs=[self.workdir.key('normalization')])
        report.save(self.workdir.report_path('pruner_training.csv'), self.meta)
        summary = {'labeled': len(labels), 'held_out_accuracy': held_out, 'parameters': params.size}
        self.write_report('pruner', summary)
        return summary

    @locked
    def embed(self):
        """ Embed every selected tile with the configured extractor. """
        selections, _ = read_selections(self.workdir.require('selection'), zoom=self.config.zoom)
        extractor = self.session.client_factory.get_extractor()
        records = extractor.embed_selections(selections.values())
        save_embeddings(self.embeddings_path(), records, self.meta)
        inputs = [self.workdir.key('selection')]
        if self.workdir.exists('extractor') and self.config.extractor.mode == 'builtin-convnet':
            inputs.append(self.workdir.key('extractor'))
        self.workdir.record('embeddings', inputs=inputs, extension=self.config.embeddings.format)
        return {'tiles': len(records), 'dim': int(records[0].vector.shape[0]) if records else 0}

    @locked
    def prune(self):
        """ Remove the tiles the pruner classifies as uninhabited (keep everything when pruning is disabled). """
        selections, _ = read_selections(self.workdir.require('selection'), zoom=self.config.zoom)
        inputs = [self.workdir.key('selection')]
        if self.config.pruning.enabled:
            classifier = self.session.client_factory.get_pruner().probability(INHABITED)
            pruned = [prune(selection, classifier, self.config.pruning.threshold) for selection in selections.values()]
            inputs.append(self.workdir.key('pruner'))
        else:
            pruned = [keep_all(selection) for selection in selections.values()]
        write_pruned(self.workdir.path('pruned'), pruned, self.meta)
        self.workdir.record('pruned', inputs=inputs)

        frame = prune_report(pruned)
        before, after = int(frame['n_before'].sum()), int(frame['n_after'].sum())
        removed = 1.0 - after / before if before else 0.0
        logging.info("Pruning kept {} of {} tiles ({:.1%} removed)".format(after, before, removed))
        table = render_table(list(frame.columns), frame.values.tolist(), title='Pruning')
        summary = {'tiles_before': before, 'tiles_after': after, 'removed_fraction': removed,
                   'fallback_districts': frame.loc[frame['fallback_flag'] == 1, 'district_id'].tolist()}
        self.write_report('prune', summary, table)
        return summary

    @locked
    def heatmap(self, district=None):
        """ Per-tile P(urban) rasters of one district (or of every district with tiles). """
        selections, _ = read_selections(self.workdir.require('selection'), zoom=self.config.zoom)
        if district is not None and district not in selections:
            raise DataError("District {} is not in the tile selection.".format(district))
        classifier = self.session.client_factory.get_classifier().probability(URBAN)
        chosen = [district] if district is not None else [d for d, s in selections.items() if not s.flagged]
        written = []
        for district_id in chosen:
            raster = heatmap(selections[district_id], classifier)
            written += write_heatmap(self.workdir.report_path('heatmap_{}'.format(district_id)), raster,
                                     self.meta, title="P(urban) in district {}".format(district_id))
        return {'districts': chosen, 'files': written}
