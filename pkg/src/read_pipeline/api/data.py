import logging
import os

from read_pipeline.api.api import API, locked
from read_pipeline.common.exceptions import DanglingDistrictReference, ImageFormatError
from read_pipeline.geo.selection import select_tiles, write_selections
from read_pipeline.store.demographics import load_demographics
from read_pipeline.store.districts import load_districts, write_districts
from read_pipeline.store.images import ImageDirectory, compute_normalization
from read_pipeline.synth.world import SynthWorldSpec, synth_world, write_world


class DataAPI(API):
    """ Data API class: the synthetic world, ingestion and tile selection. """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)

    def synth_world(self):
        """ Generate the synthetic world at the configured input paths.

        Ground-truth tile classes and field values go to `truth.csv` next to the districts file.
        """
        paths = self.config.paths
        world = synth_world(SynthWorldSpec.from_config(self.config), self.config.seed)
        write_world(world, {
            'districts': paths.districts,
            'images': paths.images,
            'labels': paths.labels,
            'binary_labels': paths.binary_labels,
            'demographics': paths.demographics,
            'truth': os.path.join(os.path.dirname(os.path.abspath(paths.districts)), 'truth.csv'),
        }, meta=self.meta)
        return {
            'districts': len(world.districts),
            'tiles': len(world.tiles),
            'uninhabited_share': world.uninhabited_share,
            'labeled_tiles': len(world.votes),
        }

    @locked
    def ingest(self):
        """ Validate the inputs, copy the districts into the work directory and compute normalization statistics.

        Statistics are only computed for the builtin network, which is the only consumer of images at this stage.
        """
        paths = self.config.paths
        districts = load_districts(paths.districts)
        known = {district.district_id for district in districts}
        if os.path.isfile(paths.demographics):
            for row, district_id in enumerate(load_demographics(paths.demographics), start=1):
                if district_id not in known:
                    raise DanglingDistrictReference(district_id, row)
        else:
            logging.warning("Demographics file {} does not exist".format(paths.demographics))

        write_districts(self.workdir.path('districts'), districts)
        self.workdir.record('districts')
        summary = {'districts': len(districts)}
        if self.config.extractor.mode == 'builtin-convnet':
            images = ImageDirectory(paths.images)
            if not len(images):
                raise ImageFormatError("no tile images found under {}".format(paths.images))
            size = self.config.convnet.input_size
            stats = compute_normalization(images.read_raster(tile, size=size) for tile in images.tiles)
            stats.save(self.workdir.path('normalization'))
            self.workdir.record('normalization')
            summary.update({'images': len(images), 'normalization': stats.to_dict()})
        self.write_report('ingest', summary)
        return summary

    @locked
    def select_tiles(self):
        """ Select every district's tiles by the three-vertex rule at the configured zoom. """
        districts = load_districts(self.workdir.require('districts'))
        zoom = self.config.zoom
        selections = [select_tiles(district, zoom) for district in districts]
        write_selections(self.workdir.path('selection'), selections, dict(self.meta, zoom=zoom))
        self.workdir.record('selection', inputs=[self.workdir.key('districts')])
        empty = [selection.district_id for selection in selections if selection.flagged]
        logging.info("Selected {} tiles over {} districts ({} empty)".format(
            sum(selection.n for selection in selections), len(selections), len(empty)))
        summary = {'zoom': zoom, 'districts': len(selections), 'tiles': sum(s.n for s in selections),
                   'empty_districts': empty}
        self.write_report('selection', summary)
        return summary
