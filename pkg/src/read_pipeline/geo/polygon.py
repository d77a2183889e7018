""" District polygons and the edge-inclusive point-in-polygon test. """
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from read_pipeline.common.exceptions import InvalidPolygon

# distance (degrees) within which a point counts as lying on an edge
EDGE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DistrictPolygon:
    """ A district boundary: one or more parts, each a shell followed by its holes.

    Rings are (n, 2) arrays of (lon, lat) with the first vertex repeated at the end.
    """
    district_id: str
    parts: Tuple[Tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        parts = tuple(tuple(np.asarray(ring, dtype=float) for ring in part) for part in self.parts)
        object.__setattr__(self, 'parts', parts)

    @property
    def rings(self):
        return self.parts[0]

    @property
    def bounds(self):
        """ (min_lon, min_lat, max_lon, max_lat) over every shell. """
        shells = np.vstack([part[0] for part in self.parts])
        return (float(shells[:, 0].min()), float(shells[:, 1].min()),
                float(shells[:, 0].max()), float(shells[:, 1].max()))

    @property
    def vertex_count(self):
        return sum(len(ring) for part in self.parts for ring in part)

    @classmethod
    def from_geojson(cls, district_id, geometry):
        """ Build a polygon from a GeoJSON Polygon or MultiPolygon geometry. """
        kind = geometry.get('type')
        if kind == 'Polygon':
            coordinates = [geometry.get('coordinates')]
        elif kind == 'MultiPolygon':
            coordinates = geometry.get('coordinates')
        else:
            raise InvalidPolygon(district_id, "unsupported geometry type {}".format(kind))
        if not coordinates or any(not part for part in coordinates):
            raise InvalidPolygon(district_id, "empty geometry")
        try:
            parts = tuple(tuple(np.asarray(ring, dtype=float)[:, :2] for ring in part) for part in coordinates)
        except (ValueError, IndexError, TypeError) as e:
            raise InvalidPolygon(district_id, "coordinates are not numeric pairs ({})".format(e))
        polygon = cls(district_id=district_id, parts=parts)
        polygon.validate()
        return polygon

    def to_geojson(self):
        coordinates = [[ring.tolist() for ring in part] for part in self.parts]
        if len(coordinates) == 1:
            return {'type': 'Polygon', 'coordinates': coordinates[0]}
        return {'type': 'MultiPolygon', 'coordinates': coordinates}

    def validate(self):
        """ Check ring closure, vertex counts and that shells do not self-intersect. """
        for part in self.parts:
            for index, ring in enumerate(part):
                if ring.ndim != 2 or ring.shape[1] != 2:
                    raise InvalidPolygon(self.district_id, "ring {} is not a list of coordinate pairs".format(index))
                if len(ring) < 4:
                    raise InvalidPolygon(self.district_id, "ring {} has fewer than 4 vertices".format(index))
                if not np.all(np.isfinite(ring)):
                    raise InvalidPolygon(self.district_id, "ring {} has non-finite coordinates".format(index))
                if not np.array_equal(ring[0], ring[-1]):
                    raise InvalidPolygon(self.district_id, "ring {} is not closed".format(index))
            if _ring_self_intersects(part[0]):
                raise InvalidPolygon(self.district_id, "outer ring self-intersects")


def _orientation(a, b, c):
    return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) -
                   (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))


def _ring_self_intersects(ring):
    starts, ends = ring[:-1], ring[1:]
    count = len(starts)
    for i in range(count - 2):
        # segments j > i + 1; the last segment is adjacent to the first
        j = np.arange(i + 2, count if i > 0 else count - 1)
        if len(j) == 0:
            continue
        a, b = starts[i], ends[i]
        c, d = starts[j], ends[j]
        o1 = _orientation(a, b, c)
        o2 = _orientation(a, b, d)
        o3 = _orientation(c, d, a)
        o4 = _orientation(c, d, b)
        proper = (o1 * o2 < 0) & (o3 * o4 < 0)
        if np.any(proper):
            return True
        # touching: an endpoint lying on the other segment
        for p, q, r, o in ((a, b, c, o1), (a, b, d, o2)):
            on = (o == 0) & _within_box(p, q, r)
            if np.any(on):
                return True
        for p, o in ((a, o3), (b, o4)):
            on = (o == 0) & _within_box(c, d, p)
            if np.any(on):
                return True
    return False


def _within_box(p, q, r):
    return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0])) &
            (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))


def _ring_test(ring, lons, lats):
    """ Even-odd crossing parity and on-edge flags of points against one ring. """
    inside = np.zeros(lons.shape, dtype=bool)
    on_edge = np.zeros(lons.shape, dtype=bool)
    for (ax, ay), (bx, by) in zip(ring[:-1], ring[1:]):
        dx, dy = bx - ax, by - ay
        length = np.hypot(dx, dy)
        cross = dx * (lats - ay) - dy * (lons - ax)
        within = ((min(ax, bx) <= lons) & (lons <= max(ax, bx)) &
                  (min(ay, by) <= lats) & (lats <= max(ay, by)))
        on_edge |= within & (np.abs(cross) <= EDGE_TOLERANCE * length)
        straddles = (ay > lats) != (by > lats)
        if np.any(straddles):
            with np.errstate(divide='ignore', invalid='ignore'):
                x_cross = dx * (lats - ay) / dy + ax
            inside ^= straddles & (lons < x_cross)
    return inside, on_edge


def points_in_polygon(lons, lats, polygon):
    """ Vectorised point-in-polygon test.

    A point is inside when it is inside (or on the boundary of) some part's shell and not strictly inside any of
    that part's holes. Points on any edge, hole edges included, count as inside.

    :param numpy.ndarray lons: Longitudes.
    :param numpy.ndarray lats: Latitudes (same shape).
    :param DistrictPolygon polygon: The polygon.
    :rtype: numpy.ndarray
    """
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    result = np.zeros(lons.shape, dtype=bool)
    for part in polygon.parts:
        shell_inside, shell_on = _ring_test(part[0], lons, lats)
        part_inside = shell_inside | shell_on
        for hole in part[1:]:
            hole_inside, hole_on = _ring_test(hole, lons, lats)
            part_inside &= ~(hole_inside & ~hole_on)
        result |= part_inside
    return result


def point_in_polygon(point, polygon):
    """ Whether a GeoPoint is inside a district polygon (edges inclusive). """
    return bool(points_in_polygon(np.array([point.lon]), np.array([point.lat]), polygon)[0])
