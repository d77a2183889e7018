import logging
import os
from abc import ABC
from functools import wraps

import numpy as np

from read_pipeline.common.utility import write_json
from read_pipeline.model.pruning import read_pruned
from read_pipeline.store.districts import load_districts
from read_pipeline.store.embeddings import group_by_district, load_embeddings


def locked(func):
    """ Decorator holding the work directory lock while an API command runs. """
    @wraps(func)
    def wrapper(self, *args, **kwargs):
        with self.workdir.lock():
            self.workdir.ensure_layout()
            return func(self, *args, **kwargs)
    return wrapper


class API(ABC):
    """ Base API class. """
    def __init__(self, session):
        self.session = session

    @property
    def config(self):
        return self.session.config

    @property
    def workdir(self):
        return self.session.workdir

    @property
    def meta(self):
        return dict(self.session.meta)

    def embeddings_path(self):
        return self.workdir.path('embeddings', extension=self.config.embeddings.format)

    def embeddings_key(self):
        return self.workdir.key('embeddings', extension=self.config.embeddings.format)

    def kept_embeddings(self):
        """ Embeddings of every district's kept tiles, checked for a single lineage.

        :return: district id -> n_i x E matrix, in embedding store order; districts without kept tiles are left out.
        :rtype: dict
        """
        self.workdir.require('embeddings', extension=self.config.embeddings.format)
        pruned_path = self.workdir.require('pruned')
        self.workdir.check_lineage([self.embeddings_key(), self.workdir.key('pruned')])
        district_ids = [district.district_id for district in load_districts(self.workdir.require('districts'))]
        grouped = group_by_district(load_embeddings(self.embeddings_path(), district_ids=district_ids))
        pruned, _ = read_pruned(pruned_path, district_ids=list(grouped))
        tiles = {}
        for district_id, (district_tiles, matrix) in grouped.items():
            kept = pruned[district_id].kept
            rows = [index for index, tile in enumerate(district_tiles) if tile in kept]
            if not rows:
                logging.warning("District {} has no kept tiles and is skipped".format(district_id))
                continue
            tiles[district_id] = matrix[np.array(rows)]
        return tiles

    def write_report(self, name, payload=None, table=None):
        """ Write `reports/<name>.json` and/or `reports/<name>.txt`.

        :return: The written paths.
        :rtype: list
        """
        written = []
        if payload is not None:
            path = self.workdir.report_path(name + '.json')
            write_json(path, dict(payload, config_hash=self.session.config_hash))
            written.append(path)
        if table is not None:
            path = self.workdir.report_path(name + '.txt')
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, 'w') as f:
                f.write(table + '\n')
            written.append(path)
        for path in written:
            logging.info("Wrote {}".format(path))
        return written
