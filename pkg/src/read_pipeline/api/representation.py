import logging

import numpy as np

from read_pipeline.api.api import API, locked
from read_pipeline.common.exceptions import TooFewRows
from read_pipeline.stats import pca
from read_pipeline.stats.spatial import ReducedDistrict, represent, write_representations


class RepresentationAPI(API):
    """ Representation API class: PCA over kept tile embeddings and the per-district statistics. """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)

    def _inputs(self):
        return [self.embeddings_key(), self.workdir.key('pruned')]

    @locked
    def fit_pca(self):
        """ Fit PCA on the kept tiles of every district; k is fixed or chosen by explained variance. """
        tiles = self.kept_embeddings()
        if not tiles:
            raise TooFewRows(0, 2)
        rows = np.vstack(list(tiles.values()))
        settings = self.config.pca
        model = pca.fit_auto(rows, k=settings.k, k_max=settings.k_max, variance_target=settings.variance_target)
        pca.save_pca(self.workdir.path('pca'), model, self.meta)
        self.workdir.record('pca', inputs=self._inputs())
        logging.info("PCA on {} tiles keeps k={} ({:.1%} of the variance)".format(
            rows.shape[0], model.k, float(model.explained_variance_ratio.sum())))
        summary = {'tiles': int(rows.shape[0]), 'dim': model.dim, 'k': model.k,
                   'explained_variance_ratio': model.explained_variance_ratio.tolist()}
        self.write_report('pca', summary)
        return summary

    @locked
    def represent(self):
        """ Build the fixed-length representation of every district with kept tiles. """
        model, _ = pca.load_pca(self.workdir.require('pca'))
        self.workdir.check_lineage([self.workdir.key('pca')])
        tiles = self.kept_embeddings()
        ddof = self.config.spatial_stats.sigma_ddof
        representations = [represent(ReducedDistrict(district_id, pca.transform(model, matrix)), sigma_ddof=ddof)
                           for district_id, matrix in tiles.items()]
        write_representations(self.workdir.path('representations'), representations, model.k, meta=self.meta)
        self.workdir.record('representations', inputs=self._inputs() + [self.workdir.key('pca')])
        length = len(representations[0]) if representations else 0
        logging.info("Built {} representations of length {}".format(len(representations), length))
        return {'districts': len(representations), 'k': model.k, 'length': length}
