import importlib
import logging
from abc import ABC

import numpy as np

from read_pipeline.common.constants import ARTIFACTS
from read_pipeline.common.exceptions import EmbeddingFormatError, InvalidConfiguration, UntrainedModel
from read_pipeline.model.convnet import ConvNet, load_checkpoint
from read_pipeline.store.districts import load_districts
from read_pipeline.store.embeddings import EmbeddingRecord, load_embeddings
from read_pipeline.store.images import ImageDirectory, NormalizationStats


class TileClassifier:
    """ A trained network from a work directory, applied to tiles of the image directory. """
    def __init__(self, session, artifact, workdir=None):
        workdir = workdir or session.model_workdir
        if not workdir.exists(artifact):
            raise UntrainedModel(artifact, ARTIFACTS[artifact][2])
        self.spec, self.params, self.meta = load_checkpoint(workdir.path(artifact))
        self.stats = NormalizationStats.load(workdir.require('normalization'))
        self.images = ImageDirectory(session.config.paths.images)
        self.batch_size = session.config.extractor.batch_size
        self.net = ConvNet(self.spec)

    def _chunks(self, tiles, fn, width):
        tiles = list(tiles)
        outputs = [fn(self.params, self.images.load_batch(tiles[i:i + self.batch_size], stats=self.stats,
                                                          size=self.spec.input_size))
                   for i in range(0, len(tiles), self.batch_size)]
        return np.vstack(outputs) if outputs else np.zeros((0, width))

    def embed(self, tiles):
        return self._chunks(tiles, self.net.embed, self.spec.embedding_dim)

    def predict_proba(self, tiles):
        return self._chunks(tiles, self.net.predict_proba, self.spec.n_classes)

    def probability(self, class_index):
        """ Callable mapping tiles to the probability of one class. """
        return lambda tiles: self.predict_proba(tiles)[:, class_index]


class FeatureExtractor(ABC):
    """ Source of per-tile embeddings. """
    def __init__(self, session, workdir=None, **kwargs):
        self.session = session
        self.workdir = workdir or session.model_workdir

    def embed(self, tiles):
        """ Embeddings of the given tiles.

        :param list tiles: TileIds.
        :return: N x E array.
        """
        raise NotImplementedError

    def predict_proba(self, tiles):
        """ Three-class probabilities of the given tiles.

        :param list tiles: TileIds.
        :return: N x 3 array.
        """
        raise UntrainedModel('extractor classifier', ARTIFACTS['extractor'][2])

    def embed_selections(self, selections):
        """ One EmbeddingRecord per (district, tile), districts in the given order and tiles sorted.

        :param selections: Objects with district_id and sorted_tiles() (TileSelection or PrunedSelection).
        :rtype: list
        """
        records = []
        for selection in selections:
            tiles = selection.sorted_tiles()
            if not tiles:
                continue
            vectors = self.embed(tiles)
            records.extend(EmbeddingRecord(tile=tile, district_id=selection.district_id, vector=vector)
                           for tile, vector in zip(tiles, vectors))
        logging.info("Embedded {} tiles with {}".format(len(records), type(self).__name__))
        return records


class ConvNetExtractor(FeatureExtractor):
    """ Embeddings from the trained Mean Teacher network. """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.classifier = TileClassifier(self.session, 'extractor', workdir=self.workdir)

    def embed(self, tiles):
        return self.classifier.embed(tiles)

    def predict_proba(self, tiles):
        return self.classifier.predict_proba(tiles)


class ExternalEmbeddingExtractor(FeatureExtractor):
    """ Embeddings read from a precomputed file (`paths.embeddings`). """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.path = self.session.config.paths.embeddings
        if not self.path:
            raise InvalidConfiguration('paths.embeddings', "external-embeddings mode needs an embeddings file")
        districts = load_districts(self.session.workdir.require('districts'))
        records = load_embeddings(self.path, district_ids=[district.district_id for district in districts])
        self.vectors = {}
        for record in records:
            self.vectors.setdefault(record.tile, record.vector)

    def embed(self, tiles):
        missing = [tile for tile in tiles if tile not in self.vectors]
        if missing:
            raise EmbeddingFormatError(self.path, '-', "no embedding for tile z={} x={} y={}".format(
                missing[0].z, missing[0].x, missing[0].y))
        return np.vstack([self.vectors[tile] for tile in tiles]).astype(float)


class ExtractorClientFactory:
    def __init__(self, session):
        self.session = session

    def get_extractor(self, mode=None, workdir=None):
        """ Instantiate the extractor client configured for a mode.

        :param str mode: Extractor mode (extractor.mode when None).
        :param WorkdirSession workdir: Work directory holding trained models.
        :rtype: FeatureExtractor
        """
        extractor = self.session.config.extractor
        mode = mode or extractor.mode
        if mode not in extractor.clients:
            raise InvalidConfiguration('extractor.mode', "no client configured for {}".format(mode))
        attributes = extractor.clients.get(mode)
        module = importlib.import_module("{package_name}.{module_name}".format(
            package_name=attributes.get('package_name'),
            module_name=attributes.get('module_name')
        ))
        return getattr(module, attributes.get('class_name'))(session=self.session, workdir=workdir)

    def get_pruner(self, workdir=None):
        """ The trained inhabited/uninhabited classifier. """
        return TileClassifier(self.session, 'pruner', workdir=workdir)

    def get_classifier(self, workdir=None):
        """ The trained three-class network. """
        return TileClassifier(self.session, 'extractor', workdir=workdir)
