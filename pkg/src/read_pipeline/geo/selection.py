""" Selection of the tiles belonging to a district by the three-vertex rule. """
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet

import numpy as np
import pandas as pd

from read_pipeline.common.constants import MAX_LATITUDE, MAX_ZOOM
from read_pipeline.common.exceptions import InvalidTile
from read_pipeline.common.utility import read_csv, write_csv
from read_pipeline.geo.polygon import points_in_polygon
from read_pipeline.geo.tiles import GeoPoint, TileId, grid_lat, grid_lon, lonlat_to_tile

MIN_VERTEX_HITS = 3


@dataclass(frozen=True)
class TileSelection:
    district_id: str
    zoom: int
    tiles: FrozenSet[TileId]
    vertex_hits: Dict[TileId, int] = field(default_factory=dict, compare=False)

    @property
    def n(self):
        return len(self.tiles)

    @property
    def flagged(self):
        """ An empty selection (a polygon smaller than the three-vertex rule can resolve). """
        return not self.tiles

    def sorted_tiles(self):
        return sorted(self.tiles)


def candidate_range(polygon, z):
    """ Tile-space bounding box of a polygon, expanded by one tile and clamped to the grid.

    :return: (x_min, x_max, y_min, y_max), inclusive.
    """
    min_lon, min_lat, max_lon, max_lat = polygon.bounds
    eps = 1e-9
    lon_lo = min(max(min_lon, -180.0), 180.0 - eps)
    lon_hi = min(max(max_lon, -180.0), 180.0 - eps)
    lat_lo = min(max(min_lat, -MAX_LATITUDE + eps), MAX_LATITUDE - eps)
    lat_hi = min(max(max_lat, -MAX_LATITUDE + eps), MAX_LATITUDE - eps)
    north_west = lonlat_to_tile(GeoPoint(lon_lo, lat_hi), z)
    south_east = lonlat_to_tile(GeoPoint(lon_hi, lat_lo), z)
    last = (1 << z) - 1
    return (max(north_west.x - 1, 0), min(south_east.x + 1, last),
            max(north_west.y - 1, 0), min(south_east.y + 1, last))


def corner_hits(polygon, z, x_min, x_max, y_min, y_max):
    """ Number of corners inside the polygon for every tile of an inclusive tile range.

    :return: Integer array indexed [y - y_min, x - x_min].
    :rtype: numpy.ndarray
    """
    lons = np.array([grid_lon(x, z) for x in range(x_min, x_max + 2)])
    lats = np.array([grid_lat(y, z) for y in range(y_min, y_max + 2)])
    grid_lons, grid_lats = np.meshgrid(lons, lats)
    inside = points_in_polygon(grid_lons, grid_lats, polygon).astype(int)
    return inside[:-1, :-1] + inside[:-1, 1:] + inside[1:, 1:] + inside[1:, :-1]


def select_tiles(polygon, z):
    """ Select every tile with at least three of its four corners inside the polygon.

    Corners on an edge count as inside.

    :param DistrictPolygon polygon: The district polygon.
    :param int z: The zoom level.
    :rtype: TileSelection
    """
    if not (0 <= z <= MAX_ZOOM):
        raise InvalidTile(0, 0, z)
    x_min, x_max, y_min, y_max = candidate_range(polygon, z)
    hits = corner_hits(polygon, z, x_min, x_max, y_min, y_max)
    rows, cols = np.nonzero(hits >= MIN_VERTEX_HITS)
    vertex_hits = {}
    for row, col in zip(rows, cols):
        tile = TileId(x=int(x_min + col), y=int(y_min + row), z=z)
        vertex_hits[tile] = int(hits[row, col])
    if not vertex_hits:
        logging.warning("District {} selects no tiles at zoom {}".format(polygon.district_id, z))
    else:
        logging.debug("District {} selects {} tiles at zoom {}".format(polygon.district_id, len(vertex_hits), z))
    return TileSelection(district_id=polygon.district_id, zoom=z, tiles=frozenset(vertex_hits),
                         vertex_hits=vertex_hits)


def write_selections(path, selections, meta=None):
    """ Write selections as `district_id,z,x,y,vertex_hits`. """
    rows = []
    for selection in selections:
        for tile in selection.sorted_tiles():
            rows.append((selection.district_id, tile.z, tile.x, tile.y, selection.vertex_hits.get(tile, 4)))
    frame = pd.DataFrame(rows, columns=['district_id', 'z', 'x', 'y', 'vertex_hits'])
    write_csv(path, frame, meta)


def read_selections(path, zoom=None, district_ids=()):
    """ Read selections back; districts listed in district_ids but absent from the file get empty selections.

    :return: (selections keyed by district id in file order, metadata)
    :rtype: tuple
    """
    frame, meta = read_csv(path)
    tiles = {district_id: {} for district_id in district_ids}
    for district_id, z, x, y, hits in frame[['district_id', 'z', 'x', 'y', 'vertex_hits']].itertuples(index=False):
        tiles.setdefault(district_id, {})[TileId(x=int(x), y=int(y), z=int(z))] = int(hits)
    selections = {}
    for district_id, vertex_hits in tiles.items():
        selection_zoom = next(iter(vertex_hits)).z if vertex_hits else zoom
        selections[district_id] = TileSelection(district_id=district_id, zoom=selection_zoom,
                                                tiles=frozenset(vertex_hits), vertex_hits=vertex_hits)
    return selections, meta
