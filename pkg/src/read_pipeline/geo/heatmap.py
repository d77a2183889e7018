""" Per-tile probability rasters over a district's tile bounding box. """
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from read_pipeline.common.exceptions import DataError
from read_pipeline.common.utility import format_metadata, plot_heatmap, write_csv, write_figure
from read_pipeline.geo.tiles import TileId

PGM_MAXVAL = 255


@dataclass(frozen=True, eq=False)
class Heatmap:
    """ Probabilities indexed [y - y_min, x - x_min]; cells outside the selection are NaN. """
    district_id: str
    zoom: int
    x_min: int
    y_min: int
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    @property
    def no_data(self):
        return ~np.isfinite(self.values)

    def tile(self, row, col):
        return TileId(x=self.x_min + col, y=self.y_min + row, z=self.zoom)

    def cells(self):
        """ (TileId, probability or None) for every cell in row-major order. """
        for row in range(self.shape[0]):
            for col in range(self.shape[1]):
                value = self.values[row, col]
                yield self.tile(row, col), (float(value) if np.isfinite(value) else None)


def heatmap(selection, classifier):
    """ Raster of per-tile probabilities aligned to the selection's tile bounding box.

    :param TileSelection selection: The district's selected tiles.
    :param classifier: Callable mapping a list of TileIds to an array of probabilities.
    :rtype: Heatmap
    """
    tiles = selection.sorted_tiles()
    if not tiles:
        raise DataError("District {} has no selected tiles to draw.".format(selection.district_id))
    xs = np.array([tile.x for tile in tiles])
    ys = np.array([tile.y for tile in tiles])
    x_min, y_min = int(xs.min()), int(ys.min())
    values = np.full((int(ys.max()) - y_min + 1, int(xs.max()) - x_min + 1), np.nan)
    values[ys - y_min, xs - x_min] = np.asarray(classifier(tiles), dtype=float)
    logging.debug("Heatmap of {}: {} x {} cells, {} with data".format(
        selection.district_id, values.shape[0], values.shape[1], len(tiles)))
    return Heatmap(district_id=selection.district_id, zoom=selection.zoom, x_min=x_min, y_min=y_min, values=values)


def to_pgm(raster, meta=None):
    """ Plain (P2) greymap: no-data cells are 0 and probabilities map onto 1..255. """
    levels = np.where(raster.no_data, 0,
                      1 + np.round(np.nan_to_num(raster.values) * (PGM_MAXVAL - 1))).astype(int)
    lines = ['P2']
    if meta:
        lines.append(format_metadata(meta).rstrip('\n'))
    lines.append("{} {}".format(raster.shape[1], raster.shape[0]))
    lines.append(str(PGM_MAXVAL))
    lines.extend(' '.join(str(level) for level in row) for row in levels)
    return '\n'.join(lines) + '\n'


def to_frame(raster):
    return pd.DataFrame([(tile.z, tile.x, tile.y, value) for tile, value in raster.cells()],
                        columns=['z', 'x', 'y', 'probability'])


def write_heatmap(prefix, raster, meta=None, title=None):
    """ Write `<prefix>.pgm`, `<prefix>.csv` and a standalone `<prefix>.html` figure.

    :return: The written paths.
    :rtype: list
    """
    os.makedirs(os.path.dirname(os.path.abspath(prefix)), exist_ok=True)
    with open(prefix + '.pgm', 'w') as f:
        f.write(to_pgm(raster, meta))
    write_csv(prefix + '.csv', to_frame(raster), meta)
    fig = plot_heatmap(raster.values, range(raster.x_min, raster.x_min + raster.shape[1]),
                       range(raster.y_min, raster.y_min + raster.shape[0]),
                       title=title or "District {}".format(raster.district_id))
    write_figure(fig, prefix + '.html')
    return [prefix + '.pgm', prefix + '.csv', prefix + '.html']
