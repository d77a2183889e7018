""" Web-Mercator slippy-tile arithmetic.

Tiles are addressed by (x, y, z) with x growing eastwards and y growing southwards. Tile edges are computed by
grid_lon / grid_lat so that corners shared by neighbouring tiles are bit-identical floats.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

from read_pipeline.common.constants import MAX_LATITUDE, MAX_ZOOM
from read_pipeline.common.exceptions import CoordinateOutOfRange, InvalidTile


class GeoPoint(NamedTuple):
    lon: float
    lat: float


@dataclass(frozen=True, order=True)
class TileId:
    x: int
    y: int
    z: int

    def __post_init__(self):
        if not (0 <= self.z <= MAX_ZOOM):
            raise InvalidTile(self.x, self.y, self.z)
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise InvalidTile(self.x, self.y, self.z)

    @property
    def filename(self):
        return "{}_{}_{}.png".format(self.z, self.x, self.y)

    @classmethod
    def from_filename(cls, filename):
        z, x, y = filename.rsplit('.', 1)[0].split('_')
        return cls(z=int(z), x=int(x), y=int(y))


def grid_lon(x, z):
    """ Longitude of the western edge of tile column x. """
    return x / (1 << z) * 360.0 - 180.0


def grid_lat(y, z):
    """ Latitude of the northern edge of tile row y. """
    return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * y / (1 << z)))))


def validate_point(point):
    if not (-180.0 <= point.lon < 180.0) or not (-MAX_LATITUDE < point.lat < MAX_LATITUDE):
        raise CoordinateOutOfRange(point.lon, point.lat)


def lonlat_to_fractional(point, z):
    """ Fractional tile-space coordinates of a point (no range check). """
    n = 1 << z
    lat = math.radians(point.lat)
    x = (point.lon + 180.0) / 360.0 * n
    y = (1.0 - math.log(math.tan(lat) + 1.0 / math.cos(lat)) / math.pi) / 2.0 * n
    return x, y


def lonlat_to_tile(point, z):
    """ Tile containing a point.

    Points on a tile edge belong to the tile on their south/east side.

    :param GeoPoint point: The point.
    :param int z: The zoom level.
    :rtype: TileId
    """
    validate_point(point)
    if not (0 <= z <= MAX_ZOOM):
        raise InvalidTile(0, 0, z)
    n = 1 << z
    fx, fy = lonlat_to_fractional(point, z)
    x = min(max(int(math.floor(fx)), 0), n - 1)
    y = min(max(int(math.floor(fy)), 0), n - 1)

    # the forward formula and grid_lat can disagree in the last bit near an edge
    if y > 0 and point.lat > grid_lat(y, z):
        y -= 1
    elif y < n - 1 and point.lat <= grid_lat(y + 1, z):
        y += 1
    if x > 0 and point.lon < grid_lon(x, z):
        x -= 1
    elif x < n - 1 and point.lon >= grid_lon(x + 1, z):
        x += 1
    return TileId(z=z, x=x, y=y)


def tile_corners(tile) -> Tuple[GeoPoint, GeoPoint, GeoPoint, GeoPoint]:
    """ Corners of a tile ordered NW, NE, SE, SW. """
    west, east = grid_lon(tile.x, tile.z), grid_lon(tile.x + 1, tile.z)
    north, south = grid_lat(tile.y, tile.z), grid_lat(tile.y + 1, tile.z)
    return GeoPoint(west, north), GeoPoint(east, north), GeoPoint(east, south), GeoPoint(west, south)


def tile_center(tile):
    """ Geographic centre of a tile, taken at the middle of its Mercator extent. """
    z = tile.z + 1
    return GeoPoint(grid_lon(2 * tile.x + 1, z), grid_lat(2 * tile.y + 1, z))


def tile_contains(tile, point):
    """ Whether a point lies in a tile under the south/east edge convention. """
    nw, ne, se, sw = tile_corners(tile)
    return nw.lon <= point.lon < ne.lon and se.lat < point.lat <= nw.lat
